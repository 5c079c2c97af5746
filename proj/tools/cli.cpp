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
#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>

#include "CLI11.hpp"
#include "tegl/adaptive.hpp"
#include "tegl/corpus.hpp"
#include "tegl/detector.hpp"
#include "tegl/error.hpp"
#include "tegl/eval.hpp"
#include "tegl/manifest.hpp"

namespace tegl::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

struct TrainFlags {
  std::string arch = "cnn7";
  std::string data;
  std::string poison = "none";
  std::string trigger = "patch";
  int target = -1;
  std::vector<int> sources;
  double r_abs = 0.2;
  double r_rel = 0.5;
  double cover = 0.1;
  int partner = -1;
  std::uint64_t trigger_seed = 0;
  int epochs = 20;
  int lr_step = 15;
  double lr = 0.025;
  double momentum = 0.9;
  double decay = 1e-4;
  double gamma = 0.1;
  std::size_t batch = 64;
  std::string flip = "auto";
  bool no_augment = false;
  std::uint64_t seed = 0;
  std::string out;
};

void add_hyper_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--epochs", f.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--lr-step", f.lr_step, "Epochs between learning-rate decays")->capture_default_str();
  sub->add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--momentum", f.momentum, "SGD momentum")->capture_default_str();
  sub->add_option("--weight-decay", f.decay, "L2 weight decay")->capture_default_str();
  sub->add_option("--lr-gamma", f.gamma, "Learning-rate decay factor")->capture_default_str();
  sub->add_option("--batch", f.batch, "Mini-batch size")->capture_default_str();
  sub->add_option("--flip", f.flip, "Horizontal flip augmentation")
      ->check(CLI::IsMember({"auto", "on", "off"}))
      ->capture_default_str();
  sub->add_flag("--no-augment", f.no_augment, "Disable augmentation");
}

void add_trigger_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--trigger", f.trigger, "patch, blend, filter, vintage, negative or composite")
      ->check(CLI::IsMember({"patch", "blend", "filter", "vintage", "negative", "composite"}))
      ->capture_default_str();
  sub->add_option("--target", f.target, "Target class");
  sub->add_option("--source", f.sources, "Source class of a class-specific attack (repeatable)");
  sub->add_option("--r-abs", f.r_abs, "Poisoned fraction of the whole training set")->capture_default_str();
  sub->add_option("--r-rel", f.r_rel, "Poisoned fraction of each source class")->capture_default_str();
  sub->add_option("--cover", f.cover, "Cover-sample fraction per other class")->capture_default_str();
  sub->add_option("--partner", f.partner, "Partner class of the composite trigger");
  sub->add_option("--trigger-seed", f.trigger_seed, "Seed of the blend pattern")->capture_default_str();
}

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--arch", f.arch, "cnn7 or vgg_slim")->capture_default_str();
  sub->add_option("--data", f.data, "Dataset directory (relative paths fall back to $TEGL_DATA_DIR)")
      ->required();
  add_trigger_flags(sub, f);
  add_hyper_flags(sub, f);
  sub->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  sub->add_option("--out", f.out, "Output directory")->required();
}

TriggerSpec make_trigger(const TrainFlags& f, const Shape& image_shape) {
  if (f.trigger == "patch") return default_patch_trigger(image_shape);
  if (f.trigger == "blend") return default_blend_trigger(image_shape, f.trigger_seed);
  if (f.trigger == "filter") return default_filter_trigger(image_shape);
  if (f.trigger == "vintage" || f.trigger == "negative") {
    TriggerSpec t;
    t.kind = f.trigger == "vintage" ? TriggerKind::filter_vintage : TriggerKind::filter_negative;
    return t;
  }
  if (f.partner < 0) throw UsageError("--trigger composite needs --partner");
  return composite_trigger(f.partner);
}

TrainConfig make_train_config(const TrainFlags& f, const Shape& image_shape) {
  TrainConfig cfg;
  cfg.hyper.lr = f.lr;
  cfg.hyper.momentum = f.momentum;
  cfg.hyper.weight_decay = f.decay;
  cfg.hyper.step_epochs = f.lr_step;
  cfg.hyper.gamma = f.gamma;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch;
  cfg.seed = f.seed;
  cfg.augment.enabled = !f.no_augment;
  cfg.augment.orientation_sensitive = f.flip == "off" || (f.flip == "auto" && image_shape.at(0) == 1);
  return cfg;
}

ModelRecipe make_recipe(const TrainFlags& f, AttackKind attack, const DatasetSplits& data) {
  ModelRecipe r;
  r.arch = f.arch;
  r.attack = attack;
  r.train = make_train_config(f, data.train.image_shape());
  if (attack != AttackKind::none) {
    if (f.target < 0) throw UsageError("--target is required when poisoning");
    r.poison.trigger = make_trigger(f, data.train.image_shape());
    r.poison.target_class = f.target;
    r.poison.r_poison_absolute = f.r_abs;
    r.poison.r_poison_relative = f.r_rel;
    r.poison.cover_ratio = f.cover;
    if (attack == AttackKind::specific) {
      if (f.sources.empty()) throw UsageError("a class-specific attack needs at least one --source");
      r.poison.goal = AttackGoal::specific;
      r.poison.source_classes.insert(f.sources.begin(), f.sources.end());
    } else if (!f.sources.empty()) {
      throw UsageError("--source only applies to class-specific attacks");
    }
  }
  return r;
}

DatasetSplits load_data(const std::string& arg) { return load_dataset_dir(resolve_data_path(arg)); }

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& args,
                           std::uint64_t seed, const fs::path& out_dir) {
  RunManifest m;
  m.command = command;
  m.args = args;
  m.cwd = fs::current_path().string();
  m.seed = seed;
  m.out_dir = fs::absolute(out_dir).lexically_normal().string();
  m.started_at = utc_timestamp();
  return m;
}

void finish_manifest(RunManifest& m) {
  m.finished_at = utc_timestamp();
  write_manifest(m, fs::path(m.out_dir) / kManifestName);
}

// Runs one of the model-producing commands.
int run_training_command(const std::string& command, const std::vector<std::string>& args, const TrainFlags& f,
                         AttackKind attack, const ShapingConfig* shaping, const ExtractorAttackConfig* extractor,
                         const std::string& clean_model, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetSplits data = load_data(f.data);
  ModelRecipe recipe;
  try {
    recipe = make_recipe(f, attack, data);
    if (shaping) recipe.shaping = *shaping;
    if (extractor) recipe.extractor = *extractor;
    recipe.validate(data.train);
    if (extractor) recipe.extractor.validate(build_arch(recipe.arch, data.train.image_shape(), data.train.num_classes()));
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const fs::path out_dir = f.out;
  fs::create_directories(out_dir);
  RunManifest m = start_manifest(command, args, f.seed, out_dir);
  m.configs["recipe"] = recipe;
  m.configs["data"] = fs::absolute(resolve_data_path(f.data)).lexically_normal().string();
  if (!clean_model.empty()) m.configs["clean_model"] = fs::absolute(clean_model).lexically_normal().string();

  std::ofstream log(out_dir / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  int phase = 1, last_epoch = 0;
  const EpochCallback on_epoch = [&](const EpochStats& s, const LayerGraph& g) {
    if (s.epoch <= last_epoch) ++phase;
    last_epoch = s.epoch;
    json line{{"phase", phase},
              {"epoch", s.epoch},
              {"loss", s.loss},
              {"train_accuracy", s.train_accuracy},
              {"lr", s.lr},
              {"test_accuracy", accuracy(g, data.test)}};
    if (attack != AttackKind::none) line["asr"] = compute_asr(g, data.test, recipe.poison, recipe.train.seed);
    log << line.dump() << '\n';
    log.flush();
  };

  TrainedModel tm;
  if (!clean_model.empty()) {
    const LayerGraph clean = load_model(clean_model);
    tm.model = trojan_feature_extractor(clean, data.train, recipe.poison, recipe.extractor, recipe.train, on_epoch);
    tm.clean_accuracy = accuracy(tm.model, data.test);
    tm.asr = compute_asr(tm.model, data.test, recipe.poison, recipe.train.seed);
  } else {
    tm = train_recipe(recipe, data, on_epoch);
  }
  log.close();
  save_model(tm.model, out_dir / "model.tegl");
  json summary{{"clean_accuracy", tm.clean_accuracy},
               {"asr", tm.asr ? json(*tm.asr) : json()},
               {"recipe", recipe}};
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  m.outputs = {"model.tegl", "train_log.jsonl", "summary.json"};
  m.timings["wall_ms"] = elapsed_ms(t0);
  finish_manifest(m);

  out << "clean accuracy " << tm.clean_accuracy;
  if (tm.asr) out << ", attack success rate " << *tm.asr;
  out << "\nmodel written to " << (out_dir / "model.tegl").string() << "\n";
  return kExitOk;
}

std::optional<std::size_t> parse_l_sep(const std::string& text, bool& use_rule) {
  use_rule = false;
  if (text.empty() || text == "default") return std::nullopt;
  if (text == "auto") {
    use_rule = true;
    return std::nullopt;
  }
  std::size_t pos = 0;
  long long v = -1;
  try {
    v = std::stoll(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v < 1) throw UsageError("--l-sep expects a positive layer index or 'auto'");
  return static_cast<std::size_t>(v);
}

struct ScanFlags {
  std::string l_sep;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  int restarts = 2;
  int iterations = 1000;
  double lambda = 5e-3;
};

void add_scan_flags(CLI::App* sub, ScanFlags& f, const std::string& seed_flag) {
  sub->add_option("--l-sep", f.l_sep, "Inspected layer: index, 'auto' for the middle-layer rule, or the "
                                      "architecture default when omitted");
  sub->add_option(seed_flag, f.seed, "Seed of the representation search")->capture_default_str();
  sub->add_option("--jobs", f.jobs, "Worker threads")->capture_default_str();
  sub->add_option("--restarts", f.restarts, "Representation restarts per class")->capture_default_str();
  sub->add_option("--iterations", f.iterations, "Iteration budget per restart")->capture_default_str();
  sub->add_option("--lambda", f.lambda, "L2 weight of the representation search")->capture_default_str();
}

ScanConfig make_scan_config(const ScanFlags& f) {
  ScanConfig cfg;
  cfg.l_sep = parse_l_sep(f.l_sep, cfg.use_rule);
  cfg.seed = f.seed;
  cfg.jobs = std::max<std::size_t>(1, f.jobs);
  cfg.ir.restarts_per_class = f.restarts;
  cfg.ir.iterations = f.iterations;
  cfg.ir.lambda_l2 = f.lambda;
  try {
    cfg.ir.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

json report_json(DetectionReport r, bool keep_timing) {
  if (!keep_timing) r.wall_ms = 0.0;
  return json(r);
}

void replace_out(std::vector<std::string>& args, const std::string& dir) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) {
      args[i + 1] = dir;
      return;
    }
    if (args[i].rfind("--out=", 0) == 0) {
      args[i] = "--out=" + dir;
      return;
    }
  }
  args.push_back("--out");
  args.push_back(dir);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trojan scanning and backdoor experiments for image classifiers", "tegl"};
  app.set_version_flag("--version", std::string(TEGL_VERSION));
  app.require_subcommand(1);

  TrainFlags train_f;
  auto* train = app.add_subcommand("train", "Train a clean or poisoned model");
  add_train_flags(train, train_f);
  train->add_option("--poison", train_f.poison, "none, agnostic or specific")
      ->check(CLI::IsMember({"none", "agnostic", "specific"}))
      ->capture_default_str();

  TrainFlags shape_f;
  shape_f.poison = "agnostic";
  ShapingConfig shaping;
  auto* shape = app.add_subcommand("attack-shape", "Train a trojaned model with posterior shaping");
  add_train_flags(shape, shape_f);
  shape->add_option("--poison", shape_f.poison, "agnostic or specific")
      ->check(CLI::IsMember({"agnostic", "specific"}))
      ->capture_default_str();
  shape->add_option("--p-max", shaping.p_max, "Shaped posterior of the target class")->capture_default_str();
  shape->add_option("--mse-weight", shaping.mse_weight, "Weight of the shaping loss")->capture_default_str();

  TrainFlags ext_f;
  ExtractorAttackConfig ext_cfg;
  std::string clean_model;
  auto* ext = app.add_subcommand("attack-extractor", "Trojan the feature extractor below a layer");
  add_train_flags(ext, ext_f);
  ext->add_option("--l-atk", ext_cfg.l_atk, "First layer of the retrained head")->capture_default_str();
  ext->add_option("--refs", ext_cfg.ref_count, "Target-class reference samples")->capture_default_str();
  ext->add_option("--embed-weight", ext_cfg.embed_weight, "Weight of the trigger-embedding loss")
      ->capture_default_str();
  ext->add_option("--clean-model", clean_model, "Existing clean model (trained from --seed when omitted)");

  std::string scan_model_path, scan_out;
  ScanFlags scan_f;
  bool scan_json = false, scan_table = false, record_timing = false;
  auto* scan = app.add_subcommand("scan", "Scan a model for a backdoor");
  scan->add_option("--model", scan_model_path, "Model file")->required();
  add_scan_flags(scan, scan_f, "--seed");
  auto* json_flag = scan->add_flag("--json", scan_json, "Print the report as JSON (default)");
  scan->add_flag("--table", scan_table, "Print the report as a table")->excludes(json_flag);
  scan->add_flag("--record-timing", record_timing, "Keep wall-clock time in the written report");
  scan->add_option("--out", scan_out, "Output directory (default: <model>.scan)");

  std::string corpus_path, eval_out;
  ScanFlags eval_scan;
  EvalConfig eval_cfg;
  auto* evaluate = app.add_subcommand("evaluate", "Scan a corpus and measure TPR/FPR");
  evaluate->add_option("--corpus", corpus_path, "Corpus manifest (JSON lines)")->required();
  evaluate->add_option("--repeats", eval_cfg.repeats, "Random splits")->capture_default_str();
  evaluate->add_option("--fpr", eval_cfg.fpr_budget, "FPR budget on the calibration split")->capture_default_str();
  evaluate->add_option("--train-fraction", eval_cfg.train_fraction, "Calibration fraction per class")
      ->capture_default_str();
  evaluate->add_option("--min-per-class", eval_cfg.min_per_class, "Smallest usable class size")
      ->capture_default_str();
  evaluate->add_option("--seed", eval_cfg.seed, "Split seed")->capture_default_str();
  add_scan_flags(evaluate, eval_scan, "--scan-seed");
  evaluate->add_option("--out", eval_out, "Output directory (default: <corpus dir>/eval)");

  TrainFlags corpus_f;
  std::string spec_path;
  std::size_t n_clean = 0, n_agnostic = 0, n_specific = 0, n_shaped = 0, n_extractor = 0, corpus_jobs = 1;
  bool resume = false;
  ShapingConfig corpus_shaping;
  ExtractorAttackConfig corpus_ext;
  auto* corpus = app.add_subcommand("corpus-build", "Train a corpus of clean and trojaned models");
  corpus->add_option("--data", corpus_f.data, "Dataset directory")->required();
  corpus->add_option("--arch", corpus_f.arch, "Architecture")->capture_default_str();
  corpus->add_option("--spec", spec_path, "Corpus spec JSON (replaces the count flags)");
  corpus->add_option("--clean", n_clean, "Clean models");
  corpus->add_option("--agnostic", n_agnostic, "Class-agnostic trojaned models");
  corpus->add_option("--specific", n_specific, "Class-specific trojaned models");
  corpus->add_option("--shaped", n_shaped, "Posterior-shaped trojaned models");
  corpus->add_option("--extractor", n_extractor, "Extractor-trojaned models");
  corpus->add_option("--trigger", corpus_f.trigger, "Trigger of the trojaned models")
      ->check(CLI::IsMember({"patch", "blend", "filter", "vintage", "negative"}))
      ->capture_default_str();
  corpus->add_option("--r-abs", corpus_f.r_abs, "Class-agnostic poisoning ratio")->capture_default_str();
  corpus->add_option("--r-rel", corpus_f.r_rel, "Class-specific poisoning ratio")->capture_default_str();
  corpus->add_option("--cover", corpus_f.cover, "Cover-sample ratio")->capture_default_str();
  corpus->add_option("--trigger-seed", corpus_f.trigger_seed, "Seed of the blend pattern")->capture_default_str();
  corpus->add_option("--p-max", corpus_shaping.p_max, "Shaped posterior")->capture_default_str();
  corpus->add_option("--l-atk", corpus_ext.l_atk, "Extractor attack layer")->capture_default_str();
  add_hyper_flags(corpus, corpus_f);
  corpus->add_option("--seed", corpus_f.seed, "Master seed")->capture_default_str();
  corpus->add_option("--jobs", corpus_jobs, "Parallel training jobs")->capture_default_str();
  corpus->add_flag("--resume", resume, "Reuse models already present in the output directory");
  corpus->add_option("--out", corpus_f.out, "Output directory")->required();

  std::string replay_manifest, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare its outputs byte for byte");
  replay->add_option("manifest", replay_manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", replay_out, "Directory for the replayed outputs (default: <out>.replay)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) {
      if (train_f.poison == "none" && train_f.target >= 0) throw UsageError("--target needs --poison");
      const AttackKind kind = train_f.poison == "none"       ? AttackKind::none
                              : train_f.poison == "agnostic" ? AttackKind::agnostic
                                                             : AttackKind::specific;
      return run_training_command("train", args, train_f, kind, nullptr, nullptr, "", out);
    }
    if (shape->parsed()) {
      try {
        shaping.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      if (shape_f.poison == "specific") throw UsageError("posterior shaping is run on class-agnostic poisoning");
      return run_training_command("attack-shape", args, shape_f, AttackKind::shaped, &shaping, nullptr, "", out);
    }
    if (ext->parsed()) {
      return run_training_command("attack-extractor", args, ext_f, AttackKind::extractor, nullptr, &ext_cfg,
                                  clean_model, out);
    }
    if (scan->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const ScanConfig cfg = make_scan_config(scan_f);
      const fs::path out_dir = scan_out.empty() ? fs::path(scan_model_path + ".scan") : fs::path(scan_out);
      const DetectionReport report = scan_model(fs::path(scan_model_path), cfg);
      fs::create_directories(out_dir);
      RunManifest m = start_manifest("scan", args, cfg.seed, out_dir);
      m.configs["scan"] = cfg;
      m.configs["model"] = fs::absolute(scan_model_path).lexically_normal().string();
      write_text(out_dir / "report.json", report_json(report, record_timing).dump(2) + "\n");
      m.outputs = {"report.json"};
      m.timings["scan_ms"] = report.wall_ms;
      m.timings["wall_ms"] = elapsed_ms(t0);
      finish_manifest(m);
      if (scan_table) {
        out << render_table(report);
      } else {
        out << json(report).dump(2) << "\n";
      }
      return kExitOk;
    }
    if (evaluate->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const ScanConfig cfg = make_scan_config(eval_scan);
      try {
        eval_cfg.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      const fs::path manifest_path = corpus_path;
      const fs::path out_dir = eval_out.empty() ? manifest_path.parent_path() / "eval" : fs::path(eval_out);
      const auto records = read_corpus(manifest_path);
      const auto reports = scan_corpus(records, manifest_path.parent_path(), cfg, cfg.jobs);
      const auto scored = to_scored(records, reports);
      const auto runs = evaluate_by_setting(scored, eval_cfg);
      fs::create_directories(out_dir);
      RunManifest m = start_manifest("evaluate", args, eval_cfg.seed, out_dir);
      m.configs["scan"] = cfg;
      m.configs["eval"] = eval_cfg;
      m.configs["corpus"] = fs::absolute(manifest_path).lexically_normal().string();
      std::string reports_text, scores_text;
      double scan_ms = 0.0;
      for (std::size_t i = 0; i < reports.size(); ++i) {
        reports_text += report_json(reports[i], false).dump() + "\n";
        scores_text += json(scored[i]).dump() + "\n";
        scan_ms += reports[i].wall_ms;
      }
      write_text(out_dir / "reports.jsonl", reports_text);
      write_text(out_dir / "scores.jsonl", scores_text);
      write_text(out_dir / "eval.json", json(runs).dump(2) + "\n");
      const std::string csv = summary_csv(runs);
      write_text(out_dir / "eval.csv", csv);
      m.outputs = {"reports.jsonl", "scores.jsonl", "eval.json", "eval.csv"};
      m.timings["scan_ms_total"] = scan_ms;
      m.timings["wall_ms"] = elapsed_ms(t0);
      finish_manifest(m);
      out << csv;
      return kExitOk;
    }
    if (corpus->parsed()) {
      const auto t0 = std::chrono::steady_clock::now();
      const DatasetSplits data = load_data(corpus_f.data);
      CorpusSpec spec;
      spec.seed = corpus_f.seed;
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw Error("cannot open corpus spec " + spec_path);
        try {
          spec = json::parse(in).get<CorpusSpec>();
        } catch (const json::exception& e) {
          throw UsageError(std::string("bad corpus spec: ") + e.what());
        }
      } else {
        TrainFlags base = corpus_f;
        base.target = 0;
        auto add = [&](const std::string& name, std::size_t count, AttackKind kind) {
          if (count == 0) return;
          CorpusSetting s;
          s.name = name;
          s.count = count;
          s.recipe = make_recipe(base, kind == AttackKind::none ? kind : AttackKind::agnostic, data);
          s.recipe.attack = kind;
          if (kind == AttackKind::specific) {
            s.recipe.poison.goal = AttackGoal::specific;
            s.recipe.poison.source_classes = {1};
          }
          s.recipe.shaping = corpus_shaping;
          s.recipe.extractor = corpus_ext;
          spec.settings.push_back(std::move(s));
        };
        add("clean", n_clean, AttackKind::none);
        add("agnostic", n_agnostic, AttackKind::agnostic);
        add("specific", n_specific, AttackKind::specific);
        add("shaped", n_shaped, AttackKind::shaped);
        add("extractor", n_extractor, AttackKind::extractor);
      }
      if (spec.settings.empty()) throw UsageError("corpus-build needs --spec or at least one model count");
      try {
        for (const auto& s : spec.settings) {
          corpus_recipe(s, 0, spec.seed, data.train.num_classes()).validate(data.train);
          if (s.recipe.attack == AttackKind::extractor) {
            s.recipe.extractor.validate(
                build_arch(s.recipe.arch, data.train.image_shape(), data.train.num_classes()));
          }
        }
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      const fs::path out_dir = corpus_f.out;
      fs::create_directories(out_dir);
      RunManifest m = start_manifest("corpus-build", args, spec.seed, out_dir);
      m.configs["spec"] = spec;
      m.configs["data"] = fs::absolute(resolve_data_path(corpus_f.data)).lexically_normal().string();
      write_text(out_dir / "spec.json", json(spec).dump(2) + "\n");
      const auto records = build_corpus(spec, data, out_dir, corpus_jobs, resume, [&](const CorpusRecord& r) {
        err << "trained " << r.id << " accuracy " << r.clean_accuracy;
        if (r.asr) err << " asr " << *r.asr;
        err << "\n";
      });
      m.outputs = {"spec.json", "corpus.jsonl"};
      for (const auto& r : records) m.outputs.push_back(r.path);
      m.timings["wall_ms"] = elapsed_ms(t0);
      finish_manifest(m);
      out << records.size() << " models written to " << (out_dir / "corpus.jsonl").string() << "\n";
      return kExitOk;
    }
    if (replay->parsed()) {
      const RunManifest m = read_manifest(replay_manifest);
      if (m.command == "replay") throw UsageError("a replay manifest cannot be replayed");
      const fs::path target =
          fs::absolute(replay_out.empty() ? fs::path(m.out_dir + ".replay") : fs::path(replay_out));
      if (fs::exists(target) && fs::equivalent(target, m.out_dir)) {
        throw UsageError("the replay directory must differ from the original output directory");
      }
      std::vector<std::string> replay_args = m.args;
      replace_out(replay_args, target.string());
      const fs::path here = fs::current_path();
      if (!m.cwd.empty()) fs::current_path(m.cwd);
      std::ostringstream sink;
      int rc = kExitFailure;
      try {
        rc = run(replay_args, sink, err);
      } catch (...) {
        fs::current_path(here);
        throw;
      }
      fs::current_path(here);
      if (rc != kExitOk) {
        err << "replayed command exited with " << rc << "\n";
        return kExitFailure;
      }
      bool all = true;
      for (const auto& c : compare_outputs(m.out_dir, target, m.outputs)) {
        all = all && c.identical;
        out << (c.identical ? "identical " : "DIFFERS   ") << c.path;
        if (!c.identical) out << ": " << c.detail;
        out << "\n";
      }
      out << (all ? "replay reproduced every output\n" : "replay diverged\n");
      return all ? kExitOk : kExitFailure;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tegl::cli
