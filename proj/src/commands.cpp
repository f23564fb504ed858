#include "trace/commands.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <optional>
#include <sstream>

#include "trace/explain.hpp"
#include "trace/hashing.hpp"

namespace trace {

namespace fs = std::filesystem;

RunSpec RunSpec::defaults(ModelKind model) {
  RunSpec s;
  s.model = model;
  s.train = TrainConfig::defaults_for(model);
  return s;
}

void RunSpec::validate() const {
  train.validate();
  if (model == ModelKind::trace) trace.validate();
  else nnmlp.validate();
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  if (val_fraction + test_fraction >= 1.0) throw ConfigError("validation and test fractions leave no training data");
}

nlohmann::json RunSpec::model_config() const {
  return model == ModelKind::trace ? trace.to_json() : nnmlp.to_json();
}

nlohmann::json RunSpec::to_json() const {
  return {{"model", to_string(model)},
          {"model_config", model_config()},
          {"train", train.to_json()},
          {"val_fraction", val_fraction},
          {"test_fraction", test_fraction},
          {"missing", missing == MissingPolicy::keep ? "keep" : "drop"},
          {"standardize", standardize}};
}

RunSpec RunSpec::from_json(const nlohmann::json& j) {
  RunSpec s;
  try {
    s.model = parse_model_kind(j.at("model").get<std::string>());
    if (s.model == ModelKind::trace) s.trace = TraceConfig::from_json(j.at("model_config"));
    else s.nnmlp = NnMlpConfig::from_json(j.at("model_config"));
    s.train = TrainConfig::from_json(j.at("train"));
    s.val_fraction = j.at("val_fraction").get<double>();
    s.test_fraction = j.at("test_fraction").get<double>();
    const auto missing = j.at("missing").get<std::string>();
    if (missing != "keep" && missing != "drop") throw ConfigError("missing policy must be keep or drop");
    s.missing = missing == "keep" ? MissingPolicy::keep : MissingPolicy::drop;
    s.standardize = j.at("standardize").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid run configuration: ") + e.what());
  }
  s.validate();
  return s;
}

Splits split_dataset(const TabularDataset& raw, const RunSpec& spec) {
  Splits s;
  TabularDataset rest = raw;
  if (spec.test_fraction > 0.0) std::tie(rest, s.test) = stratified_split(raw, spec.test_fraction, spec.train.seed);
  std::tie(s.train, s.val) = stratified_split(rest, spec.val_fraction / (1.0 - spec.test_fraction), spec.train.seed);
  return s;
}

FitResult fit(const FeatureSchema& schema, const TabularDataset& train_raw, const TabularDataset& val_raw,
              const RunSpec& spec) {
  spec.validate();
  const TabularDataset used = spec.missing == MissingPolicy::drop ? drop_incomplete(train_raw) : train_raw;
  FitResult r;
  r.train_samples = used.size();
  r.bundle.schema = schema;
  const auto n_cont = static_cast<Index>(schema.n_continuous());
  r.bundle.preprocessing.standardization =
      spec.standardize ? fit_standardization(used)
                       : Standardization{Eigen::VectorXd::Zero(n_cont), Eigen::VectorXd::Ones(n_cont)};
  const auto train_set = apply_standardization(used, r.bundle.preprocessing.standardization);
  const auto val_set = apply_standardization(val_raw, r.bundle.preprocessing.standardization);
  r.bundle.preprocessing.column_floor = spec.model == ModelKind::nnmlp
                                            ? continuous_floor(train_set)
                                            : Eigen::VectorXd::Zero(n_cont);
  r.bundle.model = make_model(spec.model, schema, spec.model_config(), r.bundle.preprocessing.column_floor,
                              train_set.positive_ratio(), spec.train.seed);
  r.bundle.metadata = {{"run", spec.to_json()}, {"train_samples", used.size()}, {"version", kToolVersion}};
  r.training = train(*r.bundle.model, train_set, val_set, spec.train);
  r.report = evaluate(*r.bundle.model, val_set, spec.train.threshold);
  r.bundle.metadata["best_epoch"] = r.training.history.best_epoch().epoch;
  return r;
}

std::vector<CurvePoint> missing_curve(const FeatureSchema& schema, const TabularDataset& raw, const RunSpec& spec,
                                      const std::vector<double>& ratios, int repeats) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (ratios.empty()) throw ConfigError("no missing ratios given");
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 0.5)) throw ConfigError(fmt::format("missing ratio {} outside [0, 0.5]", r));
  }
  std::vector<CurvePoint> out;
  for (double ratio : ratios) {
    for (int rep = 0; rep < repeats; ++rep) {
      RunSpec s = spec;
      s.train.seed = spec.train.seed + static_cast<std::uint64_t>(rep);
      auto splits = split_dataset(raw, s);
      auto masked = simulate_missing(splits.train, schema, ratio, s.train.seed);
      out.push_back({ratio, rep, fit(schema, masked, splits.val, s).report});
    }
  }
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::string out = "ratio,repeat,f1,ba\n";
  std::vector<double> order;
  for (const auto& p : points) {
    out += fmt::format("{},{},{:.6f},{:.6f}\n", p.ratio, p.repeat, p.report.f1, p.report.balanced_accuracy);
    if (std::find(order.begin(), order.end(), p.ratio) == order.end()) order.push_back(p.ratio);
  }
  for (double ratio : order) {
    double f1 = 0.0, ba = 0.0;
    int n = 0;
    for (const auto& p : points) {
      if (p.ratio != ratio) continue;
      f1 += p.report.f1;
      ba += p.report.balanced_accuracy;
      ++n;
    }
    out += fmt::format("{},mean,{:.6f},{:.6f}\n", ratio, f1 / n, ba / n);
  }
  return out;
}

std::string dataset_hash(const TabularDataset& data, const FeatureSchema& schema) {
  std::ostringstream text;
  write_csv(text, data, schema);
  return sha256_hex(text.str());
}

std::vector<AblationRow> ablate_missing(const FeatureSchema& schema, const TabularDataset& raw, const RunSpec& spec,
                                        const std::vector<double>& alphas, std::ostream* warnings) {
  if (alphas.empty()) throw ConfigError("no alpha values given");
  const auto splits = split_dataset(raw, spec);
  const auto val = drop_incomplete(splits.val);
  const auto complete_train = drop_incomplete(splits.train);
  const bool has_incomplete = complete_train.size() < splits.train.size();
  if (!has_incomplete && warnings) *warnings << "warning: training split has no incomplete samples; running the keep arm only\n";
  const auto hash = dataset_hash(val, schema);

  std::vector<AblationRow> rows;
  for (double alpha : alphas) {
    RunSpec s = spec;
    s.missing = MissingPolicy::keep;
    s.train.focal_alpha = alpha;
    auto add = [&](const std::string& arm, const TabularDataset& train_raw) {
      auto r = fit(schema, train_raw, val, s);
      rows.push_back({arm, alpha, train_raw.size(), splits.train.size(), val.size(), hash, r.report});
    };
    if (has_incomplete) add("drop", complete_train);
    add("keep", splits.train);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "arm,alpha,train_samples,total_train_samples,val_samples,val_hash," + report_csv_header() + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.arm, r.alpha, r.train_samples, r.total_train_samples, r.val_samples,
                       r.val_hash, report_csv_row(r.report));
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string report_text(const EvalReport& r) {
  return fmt::format(
      "tp={} fp={} tn={} fn={}\naccuracy={:.6f} precision={:.6f} f1={:.6f}\nsensitivity={:.6f} specificity={:.6f} "
      "balanced_accuracy={:.6f}\n",
      r.tp, r.fp, r.tn, r.fn, r.accuracy, r.precision, r.f1, r.sensitivity, r.specificity, r.balanced_accuracy);
}

std::string report_file(const EvalReport& r) { return report_csv_header() + "\n" + report_csv_row(r) + "\n"; }

// Flags shared by every command that trains.
struct RunFlags {
  std::string data, schema, out;
  std::string model = "trace";
  std::optional<double> alpha, gamma, lr, weight_decay, momentum, threshold, dropout;
  std::optional<int> epochs, layers, heads, mlp_ratio, patience;
  std::optional<Index> batch_size, model_size, hidden;
  std::optional<std::string> optimizer;
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;
  bool keep_missing = false, drop_missing = false, no_checkbox_embeddings = false, shared_mlp = false;
  bool no_standardize = false;

  void attach(CLI::App* app, bool needs_out = true) {
    app->add_option("--data", data, "CSV dataset")->required();
    app->add_option("--schema", schema, "schema file (YAML or JSON)")->required();
    auto* o = app->add_option("--out", out, "output directory");
    if (needs_out) o->required();
    app->add_option("--model", model, "trace or nnmlp")->check(CLI::IsMember({"trace", "nnmlp"}));
    app->add_option("--alpha", alpha, "focal loss alpha (default 0.8)");
    app->add_option("--gamma", gamma, "focal loss gamma (default 2)");
    app->add_option("--epochs", epochs, "training epochs (default 100)");
    app->add_option("--batch-size", batch_size, "mini-batch size (default 32)");
    app->add_option("--lr", lr, "initial learning rate (default 2e-4)");
    app->add_option("--optimizer", optimizer, "adam or rmsprop (default per model)");
    app->add_option("--weight-decay", weight_decay, "coupled L2 weight decay");
    app->add_option("--momentum", momentum, "rmsprop momentum (default 0.9)");
    app->add_option("--patience", patience, "plateau scheduler patience (default 10)");
    app->add_option("--threshold", threshold, "decision threshold (default 0.5)");
    app->add_option("--val-fraction", val_fraction, "validation fraction (default 0.2)");
    app->add_option("--test-fraction", test_fraction, "held-out test fraction (default 0)");
    app->add_option("--seed", seed, "run seed (default 0)");
    app->add_option("--model-size", model_size, "trace embedding size (default 128)");
    app->add_option("--layers", layers, "trace encoder layers (default 1)");
    app->add_option("--heads", heads, "trace attention heads (default 2)");
    app->add_option("--mlp-ratio", mlp_ratio, "trace feed-forward ratio (default 4)");
    app->add_option("--dropout", dropout, "trace dropout (default 0)");
    app->add_flag("--no-checkbox-embeddings", no_checkbox_embeddings, "embed checkbox members as separate categoricals");
    app->add_flag("--shared-continuous-mlp", shared_mlp, "share one embedding MLP across continuous features");
    app->add_option("--hidden", hidden, "nnmlp hidden width (default 64)");
    app->add_flag("--no-standardize", no_standardize, "feed continuous values unscaled");
    auto* keep = app->add_flag("--keep-missing", keep_missing, "train on incomplete samples (default)");
    auto* drop = app->add_flag("--drop-missing", drop_missing, "drop incomplete training samples");
    keep->excludes(drop);
  }

  RunSpec resolve() const {
    const auto kind = parse_model_kind(model);
    const bool trace_shape = model_size || layers || heads || mlp_ratio || dropout || no_checkbox_embeddings || shared_mlp;
    if (kind == ModelKind::nnmlp && trace_shape) throw ConfigError("trace model flags cannot be combined with --model nnmlp");
    if (kind == ModelKind::trace && hidden) throw ConfigError("--hidden applies to --model nnmlp only");
    RunSpec s = RunSpec::defaults(kind);
    auto& t = s.train;
    if (alpha) t.focal_alpha = *alpha;
    if (gamma) t.focal_gamma = *gamma;
    if (epochs) t.epochs = *epochs;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.learning_rate = *lr;
    if (optimizer) t.optimizer = parse_optimizer(*optimizer);
    if (weight_decay) t.weight_decay = *weight_decay;
    if (momentum) t.momentum = *momentum;
    if (patience) t.scheduler.patience = *patience;
    if (threshold) t.threshold = *threshold;
    t.seed = seed;
    if (model_size) s.trace.model_size = *model_size;
    if (layers) s.trace.encoder_layers = *layers;
    if (heads) s.trace.heads = *heads;
    if (mlp_ratio) s.trace.mlp_ratio = *mlp_ratio;
    if (dropout) s.trace.dropout = *dropout;
    s.trace.checkbox_embeddings = !no_checkbox_embeddings;
    s.trace.shared_continuous_mlp = shared_mlp;
    if (hidden) s.nnmlp = NnMlpConfig{*hidden, *hidden};
    s.val_fraction = val_fraction;
    s.test_fraction = test_fraction;
    s.missing = drop_missing ? MissingPolicy::drop : MissingPolicy::keep;
    s.standardize = !no_standardize;
    s.validate();
    return s;
  }
};

nlohmann::json manifest_for(const std::string& command, const RunSpec& spec, const fs::path& data,
                            const fs::path& schema_path, const FeatureSchema& schema, const fs::path& out,
                            const nlohmann::json& outputs, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json m;
  m["tool"] = "trace-cli";
  m["version"] = kToolVersion;
  m["command"] = command;
  m["seed"] = spec.train.seed;
  m["config"] = spec.to_json();
  m["data"] = {{"path", fs::absolute(data).string()}, {"sha256", sha256_file(data)}};
  m["schema"] = {{"path", fs::absolute(schema_path).string()}, {"fingerprint", schema.fingerprint()}};
  m["out"] = fs::absolute(out).string();
  m["outputs"] = outputs;
  if (!extra.empty()) m["options"] = extra;
  return m;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

int train_run(const fs::path& data_path, const fs::path& schema_path, const fs::path& out_dir, const RunSpec& spec,
              std::ostream& out) {
  const auto schema = load_schema(schema_path);
  const auto raw = load_csv(data_path, schema);
  ensure_dir(out_dir);
  nlohmann::json outputs = {{"checkpoint", "model.ckpt"}, {"history", "history.csv"}, {"report", "report.csv"},
                            {"validation_data", "val.csv"}};
  if (spec.test_fraction > 0.0) {
    outputs["test_data"] = "test.csv";
    outputs["test_report"] = "test_report.csv";
  }
  write_json(out_dir / "manifest.json", manifest_for("train", spec, data_path, schema_path, schema, out_dir, outputs));

  const auto splits = split_dataset(raw, spec);
  auto r = fit(schema, splits.train, splits.val, spec);
  write_history_csv(r.training.history, out_dir / "history.csv");
  save_checkpoint(out_dir / "model.ckpt", r.bundle);
  save_csv(out_dir / "val.csv", splits.val, schema);
  write_text(out_dir / "report.csv", report_file(r.report));
  out << fmt::format("model {} trained on {} samples ({} validation), best epoch {}\n", to_string(spec.model),
                     r.train_samples, splits.val.size(), r.training.history.best_epoch().epoch);
  out << "validation report\n" << report_text(r.report);
  if (spec.test_fraction > 0.0) {
    const auto test_report = evaluate(*r.bundle.model, r.bundle.prepare(splits.test), spec.train.threshold);
    save_csv(out_dir / "test.csv", splits.test, schema);
    write_text(out_dir / "test_report.csv", report_file(test_report));
    out << "test report\n" << report_text(test_report);
  }
  return 0;
}

void check_fingerprint(const ModelBundle& bundle, const FeatureSchema& schema) {
  if (bundle.schema.fingerprint() != schema.fingerprint())
    throw ConfigError("schema fingerprint " + schema.fingerprint() + " does not match the checkpoint's " +
                      bundle.schema.fingerprint());
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid " + what + " value '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty " + what + " list");
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clinical risk models for tabular data with missing values", "trace-cli"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, history and report");
  train_flags.attach(train_cmd);

  std::string ck, eval_data, eval_schema, eval_out;
  double eval_threshold = 0.5;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ck, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "CSV dataset")->required();
  eval_cmd->add_option("--schema", eval_schema, "schema file")->required();
  eval_cmd->add_option("--threshold", eval_threshold, "decision threshold (default 0.5)");
  eval_cmd->add_option("--out", eval_out, "report CSV path (default eval_report.csv next to the checkpoint)");

  RunFlags curve_flags;
  std::string ratios_text = "0,0.1,0.2,0.3,0.4,0.5";
  int repeats = 3;
  auto* curve_cmd = app.add_subcommand("missing-curve", "performance versus simulated missing ratio");
  curve_flags.attach(curve_cmd);
  curve_cmd->add_option("--ratios", ratios_text, "comma separated ratios in [0, 0.5]");
  curve_cmd->add_option("--repeats", repeats, "repeats per ratio (default 3)");

  RunFlags ablate_flags;
  std::string alphas_text = "0.5,0.8";
  double inject = 0.0;
  auto* ablate_cmd = app.add_subcommand("ablate-missing", "train with and without incomplete samples");
  ablate_flags.attach(ablate_cmd);
  ablate_cmd->add_option("--alphas", alphas_text, "comma separated focal alphas (default 0.5,0.8)");
  ablate_cmd->add_option("--simulate-missing", inject, "mask this fraction of cells before splitting (default 0)");

  std::string att_ck, att_data, att_schema, att_view = "by-sample", att_out;
  Index att_samples = 100;
  int att_layer = -1;
  std::uint64_t att_seed = 0;
  auto* att_cmd = app.add_subcommand("attention", "export attention maps of a trace checkpoint");
  att_cmd->add_option("--checkpoint", att_ck, "checkpoint file")->required();
  att_cmd->add_option("--data", att_data, "CSV dataset to draw samples from")->required();
  att_cmd->add_option("--schema", att_schema, "schema file (checked against the checkpoint)");
  att_cmd->add_option("--view", att_view, "by-sample or by-feature")->check(CLI::IsMember({"by-sample", "by-feature"}));
  att_cmd->add_option("--samples", att_samples, "number of random samples (default 100)");
  att_cmd->add_option("--layer", att_layer, "encoder layer, negative counts from the end (default -1)");
  att_cmd->add_option("--seed", att_seed, "sample selection seed (default 0)");
  att_cmd->add_option("--out", att_out, "output directory")->required();

  std::string manifest_path, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "rerun a training run from its manifest");
  replay_cmd->add_option("--manifest", manifest_path, "manifest.json of the original run")->required();
  replay_cmd->add_option("--out", replay_out, "output directory (default: the original one)");

  std::string synth_out;
  SyntheticSpec synth;
  double synth_missing = 0.0;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset and its schema");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--samples", synth.samples, "sample count (default 2000)");
  synth_cmd->add_option("--positive-ratio", synth.positive_ratio, "positive fraction (default 0.1)");
  synth_cmd->add_option("--noise", synth.noise, "label noise scale (default 0.25)");
  synth_cmd->add_option("--seed", synth.seed, "generator seed (default 7)");
  synth_cmd->add_option("--missing", synth_missing, "fraction of cells to mask (default 0)");

  std::string sim_data, sim_schema, sim_output;
  double sim_ratio = 0.0;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate-missing", "mask a fraction of the cells of a dataset");
  sim_cmd->add_option("--data", sim_data, "CSV dataset")->required();
  sim_cmd->add_option("--schema", sim_schema, "schema file")->required();
  sim_cmd->add_option("--ratio", sim_ratio, "fraction of cells to mask")->required();
  sim_cmd->add_option("--seed", sim_seed, "seed (default 0)");
  sim_cmd->add_option("--output", sim_output, "output CSV")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) {
      return train_run(train_flags.data, train_flags.schema, train_flags.out, train_flags.resolve(), out);
    }
    if (eval_cmd->parsed()) {
      const auto schema = load_schema(eval_schema);
      const auto bundle = load_checkpoint(ck);
      check_fingerprint(bundle, schema);
      if (!(eval_threshold > 0.0 && eval_threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
      const auto data = bundle.prepare(load_csv(eval_data, schema));
      const auto report = evaluate(*bundle.model, data, eval_threshold);
      const fs::path path = eval_out.empty() ? fs::path(ck).parent_path() / "eval_report.csv" : fs::path(eval_out);
      write_text(path, report_file(report));
      out << report_text(report);
      return 0;
    }
    if (curve_cmd->parsed()) {
      const auto spec = curve_flags.resolve();
      const auto ratios = parse_list(ratios_text, "ratio");
      const auto schema = load_schema(curve_flags.schema);
      const auto raw = load_csv(curve_flags.data, schema);
      const fs::path dir = curve_flags.out;
      ensure_dir(dir);
      write_json(dir / "manifest.json",
                 manifest_for("missing-curve", spec, curve_flags.data, curve_flags.schema, schema, dir,
                              {{"curve", "curve.csv"}}, {{"ratios", ratios}, {"repeats", repeats}}));
      const auto points = missing_curve(schema, raw, spec, ratios, repeats);
      const auto text = curve_csv(points);
      write_text(dir / "curve.csv", text);
      out << text;
      return 0;
    }
    if (ablate_cmd->parsed()) {
      const auto spec = ablate_flags.resolve();
      const auto alphas = parse_list(alphas_text, "alpha");
      const auto schema = load_schema(ablate_flags.schema);
      auto raw = load_csv(ablate_flags.data, schema);
      if (inject > 0.0) raw = simulate_missing(raw, schema, inject, spec.train.seed);
      const fs::path dir = ablate_flags.out;
      ensure_dir(dir);
      write_json(dir / "manifest.json",
                 manifest_for("ablate-missing", spec, ablate_flags.data, ablate_flags.schema, schema, dir,
                              {{"ablation", "ablation.csv"}}, {{"alphas", alphas}, {"simulate_missing", inject}}));
      const auto rows = ablate_missing(schema, raw, spec, alphas, &err);
      const auto text = ablation_csv(rows);
      write_text(dir / "ablation.csv", text);
      out << text;
      return 0;
    }
    if (att_cmd->parsed()) {
      const auto bundle = load_checkpoint(att_ck);
      if (!att_schema.empty()) check_fingerprint(bundle, load_schema(att_schema));
      if (bundle.model->kind() != ModelKind::trace)
        throw ConfigError("model has no attention (checkpoint holds an nnmlp model)");
      if (att_samples < 1) throw ConfigError("--samples must be >= 1");
      const auto data = bundle.prepare(load_csv(att_data, bundle.schema));
      const auto rows = sample_rows(data.size(), att_samples, att_seed);
      const auto picked = data.subset(rows);
      const auto& model = static_cast<const TraceModel&>(*bundle.model);
      const auto view = parse_attention_view(att_view);
      const auto matrix = view == AttentionView::by_sample ? attention_by_sample(model, picked, att_layer)
                                                           : attention_by_feature(model, picked, att_layer);
      ensure_dir(att_out);
      const auto path = fs::path(att_out) / (view == AttentionView::by_sample ? "attention_by_sample.csv"
                                                                              : "attention_by_feature.csv");
      export_matrix_csv(matrix, path);
      out << fmt::format("wrote {} ({} x {})\n", path.string(), matrix.values.rows(), matrix.values.cols());
      return 0;
    }
    if (replay_cmd->parsed()) {
      std::ifstream in(manifest_path);
      if (!in) throw IoError("cannot read manifest " + manifest_path);
      nlohmann::json m;
      try {
        m = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt manifest " + manifest_path + ": " + e.what());
      }
      if (m.value("command", "") != "train") throw ConfigError("only train manifests can be replayed");
      const fs::path data = m.at("data").at("path").get<std::string>();
      if (sha256_file(data) != m.at("data").at("sha256").get<std::string>())
        throw ConfigError("dataset " + data.string() + " changed since the manifest was written");
      const fs::path schema = m.at("schema").at("path").get<std::string>();
      if (load_schema(schema).fingerprint() != m.at("schema").at("fingerprint").get<std::string>())
        throw ConfigError("schema " + schema.string() + " changed since the manifest was written");
      const fs::path dir = replay_out.empty() ? fs::path(m.at("out").get<std::string>()) : fs::path(replay_out);
      return train_run(data, schema, dir, RunSpec::from_json(m.at("config")), out);
    }
    if (synth_cmd->parsed()) {
      if (synth.samples < 10) throw ConfigError("--samples must be >= 10");
      auto generated = generate_synthetic(synth);
      if (synth_missing > 0.0) generated.data = simulate_missing(generated.data, synth.schema, synth_missing, synth.seed);
      ensure_dir(synth_out);
      save_csv(fs::path(synth_out) / "data.csv", generated.data, synth.schema);
      write_text(fs::path(synth_out) / "schema.json", synth.schema.to_json() + "\n");
      out << fmt::format("wrote {} samples ({} positive) to {}\n", generated.data.size(), generated.data.positives(),
                         synth_out);
      return 0;
    }
    if (sim_cmd->parsed()) {
      const auto schema = load_schema(sim_schema);
      const auto masked = simulate_missing(load_csv(sim_data, schema), schema, sim_ratio, sim_seed);
      save_csv(sim_output, masked, schema);
      out << fmt::format("masked {} cells, wrote {}\n", masked.missing_cells(), sim_output);
      return 0;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace trace
