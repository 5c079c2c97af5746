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
#include "tegl/corpus.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "tegl/error.hpp"

namespace tegl {

const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::none: return "none";
    case AttackKind::agnostic: return "agnostic";
    case AttackKind::specific: return "specific";
    case AttackKind::shaped: return "shaped";
    case AttackKind::extractor: return "extractor";
  }
  return "?";
}

AttackKind attack_kind_from_string(const std::string& name) {
  for (AttackKind k : {AttackKind::none, AttackKind::agnostic, AttackKind::specific, AttackKind::shaped,
                       AttackKind::extractor}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown attack '" + name + "'");
}

void ModelRecipe::validate(const LabeledDataset& data) const {
  train.validate();
  if (attack == AttackKind::none) return;
  poison.validate(data.num_classes(), data.image_shape());
  if (attack == AttackKind::specific && poison.goal != AttackGoal::specific) {
    throw ConfigError("a class-specific attack needs a class-specific poison config");
  }
  if ((attack == AttackKind::agnostic || attack == AttackKind::extractor) &&
      poison.goal != AttackGoal::agnostic) {
    throw ConfigError(std::string(to_string(attack)) + " attacks are class-agnostic");
  }
  if (attack == AttackKind::shaped) shaping.validate();
}

void to_json(nlohmann::json& j, const ModelRecipe& r) {
  j = nlohmann::json{{"arch", r.arch}, {"attack", to_string(r.attack)}, {"train", r.train}};
  if (r.attack != AttackKind::none) j["poison"] = r.poison;
  if (r.attack == AttackKind::shaped) j["shaping"] = r.shaping;
  if (r.attack == AttackKind::extractor) j["extractor"] = r.extractor;
}

void from_json(const nlohmann::json& j, ModelRecipe& r) {
  r = ModelRecipe{};
  r.arch = j.value("arch", r.arch);
  r.attack = attack_kind_from_string(j.value("attack", std::string("none")));
  if (j.contains("train")) r.train = j.at("train").get<TrainConfig>();
  if (j.contains("poison")) r.poison = j.at("poison").get<PoisonConfig>();
  if (j.contains("shaping")) r.shaping = j.at("shaping").get<ShapingConfig>();
  if (j.contains("extractor")) r.extractor = j.at("extractor").get<ExtractorAttackConfig>();
}

TrainedModel train_recipe(const ModelRecipe& recipe, const DatasetSplits& data,
                          const EpochCallback& on_epoch) {
  recipe.validate(data.train);
  TrainedModel out;
  const EpochCallback log = [&](const EpochStats& s, const LayerGraph& g) {
    out.log.push_back(s);
    if (on_epoch) on_epoch(s, g);
  };
  const Rng poison_rng = Rng(recipe.train.seed).split("poison");
  switch (recipe.attack) {
    case AttackKind::none:
      out.model = train_model(recipe.arch, data.train, recipe.train, log);
      break;
    case AttackKind::agnostic:
    case AttackKind::specific:
      out.model = train_model(recipe.arch, build_poisoned_dataset(data.train, recipe.poison, poison_rng),
                              recipe.train, log);
      break;
    case AttackKind::shaped:
      out.model = train_with_posterior_shaping(recipe.arch,
                                               build_poisoned_dataset(data.train, recipe.poison, poison_rng),
                                               recipe.poison.target_class, recipe.shaping, recipe.train, log);
      break;
    case AttackKind::extractor: {
      const LayerGraph clean = train_model(recipe.arch, data.train, recipe.train, log);
      out.model = trojan_feature_extractor(clean, data.train, recipe.poison, recipe.extractor, recipe.train, log);
      break;
    }
  }
  out.clean_accuracy = accuracy(out.model, data.test);
  if (recipe.attack != AttackKind::none) out.asr = compute_asr(out.model, data.test, recipe.poison, recipe.train.seed);
  return out;
}

void to_json(nlohmann::json& j, const CorpusSetting& s) {
  j = nlohmann::json{{"name", s.name}, {"count", s.count}, {"recipe", s.recipe}};
}

void from_json(const nlohmann::json& j, CorpusSetting& s) {
  s.name = j.at("name").get<std::string>();
  s.count = j.at("count").get<std::size_t>();
  s.recipe = j.at("recipe").get<ModelRecipe>();
}

void to_json(nlohmann::json& j, const CorpusSpec& s) {
  j = nlohmann::json{{"seed", s.seed}, {"settings", s.settings}};
}

void from_json(const nlohmann::json& j, CorpusSpec& s) {
  s.seed = j.value("seed", std::uint64_t{0});
  s.settings = j.at("settings").get<std::vector<CorpusSetting>>();
}

void to_json(nlohmann::json& j, const CorpusRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"path", r.path},
                     {"ground_truth", r.trojaned ? "trojaned" : "clean"},
                     {"setting", r.setting},
                     {"poison_config", r.poison ? nlohmann::json(*r.poison) : nlohmann::json()},
                     {"seed", r.seed},
                     {"clean_accuracy", r.clean_accuracy},
                     {"asr", r.asr ? nlohmann::json(*r.asr) : nlohmann::json()}};
}

void from_json(const nlohmann::json& j, CorpusRecord& r) {
  r = CorpusRecord{};
  r.path = j.at("path").get<std::string>();
  r.id = j.value("id", r.path);
  const auto truth = j.at("ground_truth");
  if (truth.is_boolean()) {
    r.trojaned = truth.get<bool>();
  } else {
    const auto s = truth.get<std::string>();
    if (s != "clean" && s != "trojaned") throw FormatError("ground_truth must be 'clean' or 'trojaned'", 0);
    r.trojaned = s == "trojaned";
  }
  r.setting = j.value("setting", std::string(r.trojaned ? "trojaned" : "clean"));
  if (j.contains("poison_config") && !j.at("poison_config").is_null()) {
    r.poison = j.at("poison_config").get<PoisonConfig>();
  }
  r.seed = j.value("seed", std::uint64_t{0});
  r.clean_accuracy = j.value("clean_accuracy", 0.0);
  if (j.contains("asr") && !j.at("asr").is_null()) r.asr = j.at("asr").get<double>();
}

ModelRecipe corpus_recipe(const CorpusSetting& setting, std::size_t index, std::uint64_t master_seed,
                          std::size_t num_classes) {
  ModelRecipe r = setting.recipe;
  r.train.seed = Rng(master_seed).split(setting.name).split(index).next();
  if (r.attack == AttackKind::none) return r;
  Rng pick = Rng(r.train.seed).split("target");
  const auto n = static_cast<std::uint64_t>(num_classes);
  r.poison.target_class = static_cast<int>(pick.below(n));
  if (r.poison.goal == AttackGoal::specific) {
    r.poison.source_classes = {static_cast<int>((static_cast<std::uint64_t>(r.poison.target_class) + 1 +
                                                 pick.below(n - 1)) % n)};
  }
  return r;
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error("cannot open corpus manifest " + manifest.string());
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<CorpusRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest.string() + ": " + e.what(), here);
    }
  }
  return out;
}

void write_corpus(const std::vector<CorpusRecord>& records, const std::filesystem::path& manifest) {
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus manifest " + manifest.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

std::vector<CorpusRecord> build_corpus(const CorpusSpec& spec, const DatasetSplits& data,
                                       const std::filesystem::path& out_dir, std::size_t jobs,
                                       bool resume, const ProgressFn& progress) {
  struct Job {
    std::string id;
    std::string setting;
    ModelRecipe recipe;
  };
  std::vector<Job> work;
  for (const auto& s : spec.settings) {
    if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError("setting names must be non-empty and free of spaces and slashes");
    }
    for (std::size_t i = 0; i < s.count; ++i) {
      Job job{s.name + "-" + std::to_string(i), s.name, corpus_recipe(s, i, spec.seed, data.train.num_classes())};
      job.recipe.validate(data.train);
      work.push_back(std::move(job));
    }
  }
  std::filesystem::create_directories(out_dir / "models");
  std::vector<CorpusRecord> records(work.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;

  auto run = [&] {
    for (std::size_t k = next++; k < work.size(); k = next++) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure) return;
      }
      try {
        const Job& job = work[k];
        const std::filesystem::path model_rel = std::filesystem::path("models") / (job.id + ".tegl");
        const std::filesystem::path info = out_dir / "models" / (job.id + ".json");
        CorpusRecord rec;
        bool reused = false;
        if (resume && std::filesystem::exists(out_dir / model_rel) && std::filesystem::exists(info)) {
          std::ifstream in(info);
          const auto j = nlohmann::json::parse(in);
          if (j.at("recipe") == nlohmann::json(job.recipe)) {
            rec = j.at("record").get<CorpusRecord>();
            reused = true;
          }
        }
        if (!reused) {
          TrainedModel tm = train_recipe(job.recipe, data);
          save_model(tm.model, out_dir / model_rel);
          rec.id = job.id;
          rec.path = model_rel.generic_string();
          rec.trojaned = job.recipe.attack != AttackKind::none;
          rec.setting = job.setting;
          if (rec.trojaned) rec.poison = job.recipe.poison;
          rec.seed = job.recipe.train.seed;
          rec.clean_accuracy = tm.clean_accuracy;
          rec.asr = tm.asr;
          std::ofstream out(info, std::ios::binary | std::ios::trunc);
          out << nlohmann::json{{"recipe", job.recipe}, {"record", rec}}.dump(2) << '\n';
        }
        std::lock_guard<std::mutex> lock(mu);
        records[k] = rec;
        if (progress) progress(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, work.size()));
  if (n_workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  write_corpus(records, out_dir / "corpus.jsonl");
  return records;
}

}  // namespace tegl
