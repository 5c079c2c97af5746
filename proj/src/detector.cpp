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
#include "tegl/detector.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "tegl/error.hpp"

namespace tegl {

void IrOptimConfig::validate() const {
  if (!(lambda_l2 >= 0.0)) throw ConfigError("lambda_l2 must be non-negative");
  if (iterations <= 0) throw ConfigError("IR iterations must be positive");
  if (!(step > 0.0)) throw ConfigError("IR step size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("IR momentum must lie in [0, 1)");
  if (restarts_per_class < 1) throw ConfigError("restarts_per_class must be at least 1");
  if (!(init_high > init_low)) throw ConfigError("IR init range is empty");
  if (patience <= 0) throw ConfigError("IR patience must be positive");
}

void to_json(nlohmann::json& j, const IrOptimConfig& cfg) {
  j = nlohmann::json{{"lambda_l2", cfg.lambda_l2}, {"iterations", cfg.iterations},
                     {"step", cfg.step},           {"momentum", cfg.momentum},
                     {"restarts_per_class", cfg.restarts_per_class},
                     {"init_low", cfg.init_low},   {"init_high", cfg.init_high},
                     {"patience", cfg.patience},   {"min_improvement", cfg.min_improvement}};
}

void from_json(const nlohmann::json& j, IrOptimConfig& cfg) {
  IrOptimConfig d;
  cfg.lambda_l2 = j.value("lambda_l2", d.lambda_l2);
  cfg.iterations = j.value("iterations", d.iterations);
  cfg.step = j.value("step", d.step);
  cfg.momentum = j.value("momentum", d.momentum);
  cfg.restarts_per_class = j.value("restarts_per_class", d.restarts_per_class);
  cfg.init_low = j.value("init_low", d.init_low);
  cfg.init_high = j.value("init_high", d.init_high);
  cfg.patience = j.value("patience", d.patience);
  cfg.min_improvement = j.value("min_improvement", d.min_improvement);
}

IrRun optimize_ir(const SplitModel& split, int target, const IrOptimConfig& cfg, Rng rng) {
  cfg.validate();
  const std::size_t n = split.classifier.num_classes();
  if (target < 0 || static_cast<std::size_t>(target) >= n) {
    throw ContractError("class " + std::to_string(target) + " outside 0.." + std::to_string(n - 1));
  }
  const LayerGraph* head = &split.classifier;
  LayerGraph frozen;
  for (const Var& p : split.classifier.parameters()) {
    if (p.requires_grad()) {
      frozen = split.classifier;
      frozen.set_trainable(false);
      head = &frozen;
      break;
    }
  }
  const Shape& in_shape = split.classifier.input_shape();
  Shape batch_shape{1};
  batch_shape.insert(batch_shape.end(), in_shape.begin(), in_shape.end());

  Var ir = Var::parameter(Tensor(batch_shape));
  for (float& x : ir.mutable_value().data) x = static_cast<float>(rng.uniform(cfg.init_low, cfg.init_high));
  std::vector<float> velocity(ir.numel(), 0.0f);
  const int label[1] = {target};
  const auto lambda = static_cast<float>(cfg.lambda_l2);
  const auto step = static_cast<float>(cfg.step);
  const auto beta = static_cast<float>(cfg.momentum);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.iterations));
  IrRun run;
  for (int it = 0; it < cfg.iterations; ++it) {
    Var loss = add(cross_entropy(head->forward(ir), label), scale(l2_norm(ir), lambda));
    history.push_back(loss.item());
    ir.zero_grad();
    backward(loss);
    auto& x = ir.mutable_value().data;
    const auto g = ir.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      velocity[i] = beta * velocity[i] + g[i];
      x[i] -= step * velocity[i];
      if (split.post_relu_boundary) x[i] = std::max(x[i], 0.0f);
    }
    run.iterations = it + 1;
    const auto t = history.size() - 1;
    if (t >= static_cast<std::size_t>(cfg.patience) &&
        history[t - static_cast<std::size_t>(cfg.patience)] - history[t] < cfg.min_improvement) {
      break;
    }
  }
  run.final_loss = history.back();
  run.ir = Tensor(in_shape, std::move(ir.mutable_value().data));
  return run;
}

Tensor generate_dummy_ir(const SplitModel& split, int target, const IrOptimConfig& cfg,
                         std::uint64_t seed, std::vector<std::string>* warnings) {
  const Rng base = Rng(seed).split("dummy-ir").split(static_cast<std::uint64_t>(target));
  Tensor mean(split.classifier.input_shape());
  std::vector<double> acc(mean.numel(), 0.0);
  for (int r = 0; r < cfg.restarts_per_class; ++r) {
    const IrRun run = optimize_ir(split, target, cfg, base.split(static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += run.ir[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    mean[i] = static_cast<float>(acc[i] / cfg.restarts_per_class);
  }
  if (warnings) {
    Tensor batch = mean.reshaped([&] {
      Shape s{1};
      s.insert(s.end(), mean.shape.begin(), mean.shape.end());
      return s;
    }());
    const int got = split.classifier.classify(batch)[0];
    if (got != target) {
      warnings->push_back("dummy IR for class " + std::to_string(target) +
                          " did not converge (classified as " + std::to_string(got) + ")");
    }
  }
  return mean;
}

PosteriorMatrix build_posterior_matrix(const SplitModel& split, std::span<const Tensor> irs) {
  const std::size_t n = split.classifier.num_classes();
  if (irs.size() != n) {
    throw ContractError("need one representation per class: got " + std::to_string(irs.size()) +
                        " for " + std::to_string(n) + " classes");
  }
  const Shape& in_shape = split.classifier.input_shape();
  Shape bshape{n};
  bshape.insert(bshape.end(), in_shape.begin(), in_shape.end());
  Tensor batch(bshape);
  const std::size_t d = shape_numel(in_shape);
  for (std::size_t k = 0; k < n; ++k) {
    if (irs[k].shape != in_shape) {
      throw ContractError("representation " + std::to_string(k) + " has shape " +
                          shape_str(irs[k].shape) + ", classifier expects " + shape_str(in_shape));
    }
    std::copy(irs[k].data.begin(), irs[k].data.end(), batch.data.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  const Tensor logits = split.classifier.predict(batch);

  PosteriorMatrix m;
  m.n = n;
  m.posteriors.resize(n * n);
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data.data() + r * n;
    const double mx = *std::max_element(z, z + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < n; ++j) m.posteriors[r * n + j] = std::exp(z[j] - mx) / total;
  }
  m.mat_p = m.posteriors;
  for (std::size_t k = 0; k < n; ++k) m.mat_p[k * n + k] = 0.0;
  m.v.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) m.v[c] += m.mat_p[r * n + c];
  }
  for (double& x : m.v) x /= static_cast<double>(n);
  return m;
}

double quantile_linear(std::span<const double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty set");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

AnomalyMetric compute_anomaly_metric(std::span<const double> v) {
  if (v.size() < 4) {
    throw ContractError("the box-plot metric needs at least 4 classes, got " +
                        std::to_string(v.size()));
  }
  AnomalyMetric m;
  m.q1 = quantile_linear(v, 0.25);
  m.q3 = quantile_linear(v, 0.75);
  double iqr = m.q3 - m.q1;
  if (iqr < kIqrFloor) {
    iqr = kIqrFloor;
    m.degenerate = true;
  }
  m.m_trojaned = (*std::max_element(v.begin(), v.end()) - m.q3) / iqr;
  return m;
}

ModifiedMetric modify_metric(double m_trojaned, std::size_t channels) {
  ModifiedMetric out;
  if (channels == 1) {
    out.m_const = 1.5;
  } else if (channels == 3) {
    out.m_const = 1.0;
  } else {
    out.m_const = 1.0;
    out.warning = "unsupported channel count " + std::to_string(channels) +
                  "; using M_const = 1.0";
  }
  out.value = std::abs(m_trojaned - out.m_const);
  return out;
}

std::size_t select_inspected_layer(const LayerGraph& model) {
  const std::size_t count = model.parameterized_count();
  if (count < 3) {
    throw ContractError("model has " + std::to_string(count) +
                        " parameterized layers; at least 3 are needed");
  }
  return count <= 30 ? (count + 1) / 2 : 10;
}

std::size_t default_inspected_layer(const LayerGraph& model) {
  if (model.arch() == "cnn7" && model.parameterized_count() == 7) return 5;
  if (model.arch() == "vgg_slim" && model.parameterized_count() == 11) return 8;
  return select_inspected_layer(model);
}

void to_json(nlohmann::json& j, const ScanConfig& cfg) {
  j = nlohmann::json{{"l_sep", cfg.l_sep ? nlohmann::json(*cfg.l_sep) : nlohmann::json("default")},
                     {"use_rule", cfg.use_rule},
                     {"ir", cfg.ir},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, ScanConfig& cfg) {
  cfg = ScanConfig{};
  if (j.contains("l_sep") && j.at("l_sep").is_number_unsigned()) cfg.l_sep = j.at("l_sep").get<std::size_t>();
  cfg.use_rule = j.value("use_rule", false);
  if (j.contains("ir")) cfg.ir = j.at("ir").get<IrOptimConfig>();
  cfg.seed = j.value("seed", std::uint64_t{0});
}

int argmax_lowest(std::span<const double> v) {
  if (v.empty()) throw ContractError("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void to_json(nlohmann::json& j, const DetectionReport& r) {
  nlohmann::json mat = nlohmann::json::array();
  for (std::size_t row = 0; row < r.matrix.n; ++row) {
    mat.push_back(std::vector<double>(r.matrix.mat_p.begin() + static_cast<std::ptrdiff_t>(row * r.matrix.n),
                                      r.matrix.mat_p.begin() + static_cast<std::ptrdiff_t>((row + 1) * r.matrix.n)));
  }
  j = nlohmann::json{{"model_id", r.model_id},
                     {"L_sep", r.l_sep},
                     {"M_trojaned", r.m_trojaned},
                     {"M_const", r.m_const},
                     {"M_trojaned_mod", r.m_trojaned_mod},
                     {"predicted_target", r.predicted_target},
                     {"v", r.v},
                     {"mat_p", std::move(mat)},
                     {"q1", r.q1},
                     {"q3", r.q3},
                     {"degenerate", r.degenerate},
                     {"warnings", r.warnings},
                     {"wall_ms", r.wall_ms}};
}

std::string render_table(const DetectionReport& r) {
  std::ostringstream os;
  os << "model            " << r.model_id << "\n"
     << "L_sep            " << r.l_sep << "\n"
     << std::setprecision(17)
     << "M_trojaned       " << r.m_trojaned << "\n"
     << "M_const          " << r.m_const << "\n"
     << "M_trojaned_mod   " << r.m_trojaned_mod << "\n"
     << "predicted_target " << r.predicted_target << "\n"
     << "q1               " << r.q1 << "\n"
     << "q3               " << r.q3 << "\n"
     << "degenerate       " << (r.degenerate ? "yes" : "no") << "\n"
     << "wall_ms          " << r.wall_ms << "\n"
     << "class  v\n";
  for (std::size_t c = 0; c < r.v.size(); ++c) os << std::setw(5) << c << "  " << r.v[c] << "\n";
  for (const auto& w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

DetectionReport scan_model(const LayerGraph& model, const ScanConfig& cfg, const std::string& model_id) {
  const auto start = std::chrono::steady_clock::now();
  cfg.ir.validate();
  DetectionReport report;
  report.model_id = model_id;
  report.l_sep = cfg.l_sep ? *cfg.l_sep
                           : (cfg.use_rule ? select_inspected_layer(model) : default_inspected_layer(model));
  SplitModel split = split_model(model, report.l_sep);
  split.classifier.set_trainable(false);

  const std::size_t n = model.num_classes();
  std::vector<Tensor> irs(n);
  std::vector<std::vector<std::string>> class_warnings(n);
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, n));
  if (jobs == 1) {
    for (std::size_t c = 0; c < n; ++c) {
      irs[c] = generate_dummy_ir(split, static_cast<int>(c), cfg.ir, cfg.seed, &class_warnings[c]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        // Each worker evaluates its own copy of the classifier.
        SplitModel local = split;
        try {
          for (std::size_t c = next++; c < n; c = next++) {
            irs[c] = generate_dummy_ir(local, static_cast<int>(c), cfg.ir, cfg.seed, &class_warnings[c]);
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  for (auto& w : class_warnings) report.warnings.insert(report.warnings.end(), w.begin(), w.end());

  report.matrix = build_posterior_matrix(split, irs);
  report.v = report.matrix.v;
  const AnomalyMetric metric = compute_anomaly_metric(report.v);
  report.m_trojaned = metric.m_trojaned;
  report.q1 = metric.q1;
  report.q3 = metric.q3;
  report.degenerate = metric.degenerate;
  const ModifiedMetric mod = modify_metric(metric.m_trojaned, model.input_shape().at(0));
  report.m_const = mod.m_const;
  report.m_trojaned_mod = mod.value;
  if (mod.warning) report.warnings.push_back(*mod.warning);
  report.predicted_target = argmax_lowest(report.v);
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

DetectionReport scan_model(const std::filesystem::path& model_file, const ScanConfig& cfg) {
  return scan_model(load_model(model_file), cfg, model_file.filename().string());
}

}  // namespace tegl
