/* Copyright 2026 The Tegl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "tegl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "tegl/error.hpp"

namespace tegl {

void to_json(nlohmann::json& j, const ScoredModel& s) {
  j = nlohmann::json{{"id", s.id},         {"setting", s.setting},
                     {"trojaned", s.trojaned}, {"score", s.score},
                     {"predicted_target", s.predicted_target}, {"true_target", s.true_target}};
}

void from_json(const nlohmann::json& j, ScoredModel& s) {
  s.id = j.at("id").get<std::string>();
  s.setting = j.value("setting", std::string());
  s.trojaned = j.at("trojaned").get<bool>();
  s.score = j.at("score").get<double>();
  s.predicted_target = j.value("predicted_target", -1);
  s.true_target = j.value("true_target", -1);
}

double calibrate_threshold(std::span<const double> benign, std::span<const double> trojaned,
                           double fpr_budget) {
  if (benign.empty() || trojaned.empty()) {
    throw ContractError("threshold calibration needs at least one benign and one trojaned score");
  }
  std::vector<double> sorted_benign(benign.begin(), benign.end());
  std::sort(sorted_benign.begin(), sorted_benign.end(), std::greater<>());
  const std::size_t m = sorted_benign.size();
  // Largest number of benign scores allowed at or above the threshold.
  auto allowed = static_cast<std::size_t>(std::floor(fpr_budget * static_cast<double>(m)));
  while (allowed < m && static_cast<double>(allowed + 1) / static_cast<double>(m) <= fpr_budget) ++allowed;
  while (allowed > 0 && static_cast<double>(allowed) / static_cast<double>(m) > fpr_budget) --allowed;
  if (allowed >= m) {
    return std::min(sorted_benign.back(), *std::min_element(trojaned.begin(), trojaned.end()));
  }
  return std::nextafter(sorted_benign[allowed], std::numeric_limits<double>::infinity());
}

void EvalConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  if (!(fpr_budget >= 0.0 && fpr_budget <= 1.0)) throw ConfigError("FPR budget must lie in [0, 1]");
  if (repeats < 1) throw ConfigError("at least one repeat is required");
  if (min_per_class < 2) throw ConfigError("min_per_class must be at least 2");
}

void to_json(nlohmann::json& j, const EvalConfig& cfg) {
  j = nlohmann::json{{"train_fraction", cfg.train_fraction},
                     {"fpr_budget", cfg.fpr_budget},
                     {"repeats", cfg.repeats},
                     {"seed", cfg.seed},
                     {"min_per_class", cfg.min_per_class}};
}

void from_json(const nlohmann::json& j, EvalConfig& cfg) {
  EvalConfig d;
  cfg.train_fraction = j.value("train_fraction", d.train_fraction);
  cfg.fpr_budget = j.value("fpr_budget", d.fpr_budget);
  cfg.repeats = j.value("repeats", d.repeats);
  cfg.seed = j.value("seed", d.seed);
  cfg.min_per_class = j.value("min_per_class", d.min_per_class);
}

void to_json(nlohmann::json& j, const EvalRun& run) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& r : run.repeats) {
    std::size_t train = 0;
    for (SplitRole role : r.roles) train += role == SplitRole::train;
    reps.push_back({{"repeat", r.repeat},
                    {"seed", r.seed},
                    {"threshold", r.threshold},
                    {"train_models", train},
                    {"test_models", r.roles.size() - train},
                    {"train_fpr", r.train_fpr},
                    {"tpr", r.tpr},
                    {"fpr", r.fpr},
                    {"true_positives", r.true_positives},
                    {"target_hits", r.target_hits}});
  }
  j = nlohmann::json{{"label", run.label},
                     {"config", run.config},
                     {"clean", run.clean},
                     {"trojaned", run.trojaned},
                     {"mean_tpr", run.mean_tpr},
                     {"mean_fpr", run.mean_fpr},
                     {"target_accuracy", run.target_accuracy},
                     {"true_positives", run.true_positives},
                     {"target_hits", run.target_hits},
                     {"repeats", std::move(reps)}};
}

EvalRun evaluate_scores(std::span<const ScoredModel> models, const EvalConfig& cfg, const std::string& label) {
  cfg.validate();
  std::vector<std::size_t> clean, trojaned;
  for (std::size_t i = 0; i < models.size(); ++i) (models[i].trojaned ? trojaned : clean).push_back(i);
  if (clean.size() < cfg.min_per_class || trojaned.size() < cfg.min_per_class) {
    throw ConfigError("corpus '" + label + "' too small: " + std::to_string(clean.size()) + " clean and " +
                      std::to_string(trojaned.size()) + " trojaned models, need " +
                      std::to_string(cfg.min_per_class) + " of each");
  }
  EvalRun run;
  run.label = label;
  run.config = cfg;
  run.clean = clean.size();
  run.trojaned = trojaned.size();
  const Rng master = Rng(cfg.seed).split("eval");
  auto train_count = [&](std::size_t n) {
    const auto k = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n - 1);
  };

  for (int rep = 0; rep < cfg.repeats; ++rep) {
    RepeatResult r;
    r.repeat = rep;
    Rng rng = master.split(static_cast<std::uint64_t>(rep));
    r.seed = rng.split("seed").next();
    r.roles.assign(models.size(), SplitRole::test);
    for (auto* group : {&clean, &trojaned}) {
      std::vector<std::size_t> order = *group;
      rng.shuffle(order.begin(), order.end());
      const std::size_t k = train_count(order.size());
      for (std::size_t i = 0; i < k; ++i) r.roles[order[i]] = SplitRole::train;
    }
    std::vector<double> train_benign, train_trojan;
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (r.roles[i] != SplitRole::train) continue;
      (models[i].trojaned ? train_trojan : train_benign).push_back(models[i].score);
    }
    r.threshold = calibrate_threshold(train_benign, train_trojan, cfg.fpr_budget);
    std::size_t fp_train = 0;
    for (double s : train_benign) fp_train += s >= r.threshold;
    r.train_fpr = static_cast<double>(fp_train) / static_cast<double>(train_benign.size());

    std::size_t tp = 0, fp = 0, nt = 0, nb = 0;
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (r.roles[i] != SplitRole::test) continue;
      const bool flagged = models[i].score >= r.threshold;
      if (models[i].trojaned) {
        ++nt;
        if (flagged) {
          ++tp;
          r.target_hits += models[i].true_target >= 0 && models[i].predicted_target == models[i].true_target;
        }
      } else {
        ++nb;
        fp += flagged;
      }
    }
    r.true_positives = tp;
    r.tpr = static_cast<double>(tp) / static_cast<double>(nt);
    r.fpr = static_cast<double>(fp) / static_cast<double>(nb);
    run.mean_tpr += r.tpr;
    run.mean_fpr += r.fpr;
    run.true_positives += r.true_positives;
    run.target_hits += r.target_hits;
    run.repeats.push_back(std::move(r));
  }
  run.mean_tpr /= cfg.repeats;
  run.mean_fpr /= cfg.repeats;
  run.target_accuracy = run.true_positives
                            ? static_cast<double>(run.target_hits) / static_cast<double>(run.true_positives)
                            : 0.0;
  return run;
}

std::vector<DetectionReport> scan_corpus(const std::vector<CorpusRecord>& records,
                                         const std::filesystem::path& base_dir, const ScanConfig& scan,
                                         std::size_t jobs) {
  std::vector<DetectionReport> reports(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  ScanConfig single = scan;
  single.jobs = 1;
  auto run = [&] {
    try {
      for (std::size_t k = next++; k < records.size(); k = next++) {
        const std::filesystem::path p = base_dir / records[k].path;
        reports[k] = scan_model(load_model(p), single, records[k].id);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
      next = records.size();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, records.size()));
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return reports;
}

std::vector<ScoredModel> to_scored(const std::vector<CorpusRecord>& records,
                                   const std::vector<DetectionReport>& reports) {
  if (records.size() != reports.size()) throw ContractError("one report per corpus record expected");
  std::vector<ScoredModel> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i].id = records[i].id;
    out[i].setting = records[i].setting;
    out[i].trojaned = records[i].trojaned;
    out[i].score = reports[i].m_trojaned_mod;
    out[i].predicted_target = reports[i].predicted_target;
    out[i].true_target = records[i].poison ? records[i].poison->target_class : -1;
  }
  return out;
}

std::vector<EvalRun> evaluate_by_setting(std::span<const ScoredModel> models, const EvalConfig& cfg) {
  std::vector<std::string> settings;
  for (const auto& m : models) {
    if (m.trojaned && std::find(settings.begin(), settings.end(), m.setting) == settings.end()) {
      settings.push_back(m.setting);
    }
  }
  std::vector<EvalRun> runs;
  if (settings.size() > 1) {
    for (const auto& s : settings) {
      std::vector<ScoredModel> subset;
      for (const auto& m : models) {
        if (!m.trojaned || m.setting == s) subset.push_back(m);
      }
      runs.push_back(evaluate_scores(subset, cfg, s));
    }
  }
  runs.push_back(evaluate_scores(models, cfg, "global"));
  return runs;
}

std::string summary_csv(const std::vector<EvalRun>& runs) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "setting,clean,trojaned,repeats,tpr,fpr,target_accuracy\n";
  for (const auto& r : runs) {
    os << r.label << ',' << r.clean << ',' << r.trojaned << ',' << r.repeats.size() << ',' << r.mean_tpr << ','
       << r.mean_fpr << ',' << r.target_accuracy << '\n';
  }
  return os.str();
}

}  // namespace tegl
