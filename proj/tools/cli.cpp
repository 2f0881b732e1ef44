#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brakenet/checkpoint.hpp"
#include "brakenet/data.hpp"
#include "brakenet/errors.hpp"
#include "brakenet/models.hpp"
#include "brakenet/sweep.hpp"
#include "brakenet/synthetic.hpp"
#include "brakenet/training.hpp"

namespace brakenet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = BRAKENET_VERSION;
constexpr std::size_t kDefaultLength = 6288;

// Flags shared by sweep and train. Unset values fall back to per-model defaults.
struct TrainFlags {
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> momentum;
  std::uint64_t seed = 0;
  std::string split = "0.7,0.15,0.15";
  bool session_level = false;
};

void add_train_flags(CLI::App& cmd, TrainFlags& f) {
  cmd.add_option("--seed", f.seed, "split, shuffle and init seed");
  cmd.add_option("--epochs", f.epochs);
  cmd.add_option("--batch-size", f.batch_size);
  cmd.add_option("--lr", f.lr);
  cmd.add_option("--momentum", f.momentum);
  cmd.add_option("--split", f.split, "train,val,test ratios");
  cmd.add_flag("--session-level-split", f.session_level,
               "keep all windows of a session in one split");
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("bad ") + what + " value '" + item + "'");
    }
  }
  return out;
}

SplitRatios parse_split(const std::string& text) {
  const auto v = parse_doubles(text, "--split");
  if (v.size() != 3) throw ConfigError("--split needs three ratios, got '" + text + "'");
  SplitRatios r{v[0], v[1], v[2]};
  validate_ratios(r);
  return r;
}

std::vector<std::size_t> parse_grid(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(text, "--grid")) {
    if (v < 2 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("grid lengths must be integers >= 2");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--grid is empty");
  return out;
}

TrainConfig resolve_config(ModelKind kind, const TrainFlags& f) {
  TrainConfig cfg = default_config(kind);
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.lr) cfg.lr = *f.lr;
  if (f.momentum) cfg.momentum = *f.momentum;
  cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

json config_json(const TrainConfig& cfg, const SplitRatios& r, bool session_level) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"seed", cfg.seed},
          {"split", {r.train, r.val, r.test}},
          {"session_level_split", session_level}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed for " + path.string());
}

void write_run_manifest(const fs::path& dir, const std::string& command, const json& config,
                        std::uint64_t seed, const std::vector<fs::path>& artifacts,
                        json extra = json::object()) {
  json j = {{"command", command}, {"config", config},   {"seed", seed},
            {"artifacts", json::array()}, {"version", kVersion}};
  for (const auto& a : artifacts) j["artifacts"].push_back(a.string());
  j.update(extra);
  write_text(dir / "run_manifest.json", j.dump(2) + "\n");
}

DatasetSplit make_split(std::vector<Window> windows, const SplitRatios& ratios,
                        std::uint64_t seed, bool session_level) {
  return session_level ? split_by_session(std::move(windows), ratios, seed)
                       : split_dataset(std::move(windows), ratios, seed);
}

ModelSpec spec_for(ModelKind kind, std::size_t length, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = kind;
  spec.init_seed = seed;
  if (kind == ModelKind::cnn2d) {
    spec.input_dims = {kSquareSide, kSquareSide};
  } else {
    spec.input_dims = {length};
  }
  return spec;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// --- generate ---------------------------------------------------------------

CorpusConfig corpus_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  CorpusConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_per_cell") {
      cfg.n_per_cell = value.get<std::size_t>();
    } else if (key == "duration_s") {
      cfg.duration_s = value.get<double>();
    } else if (key == "label_noise_ft") {
      cfg.label_noise_ft = value.get<double>();
    } else if (key == "speed_jitter_mps") {
      cfg.speed_jitter_mps = value.get<double>();
    } else if (key == "seed") {
      cfg.seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError("unknown generator config key '" + key + "'");
    }
  }
  return cfg;
}

json corpus_to_json(const CorpusConfig& cfg) {
  json j = {{"duration_s", cfg.duration_s},
            {"label_noise_ft", cfg.label_noise_ft},
            {"speed_jitter_mps", cfg.speed_jitter_mps},
            {"seed", cfg.seed}};
  if (cfg.n_per_cell) j["n_per_cell"] = *cfg.n_per_cell;
  return j;
}

struct GenerateArgs {
  std::string config_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  CorpusConfig cfg;
  if (!a.config_file.empty()) {
    std::ifstream f(a.config_file);
    if (!f) throw ConfigError("cannot open config " + a.config_file);
    try {
      cfg = corpus_from_json(json::parse(f));
    } catch (const json::exception& e) {
      throw ConfigError(a.config_file + ": " + e.what());
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  const fs::path dir(a.out_dir);
  const auto records = gen_corpus(cfg, dir);
  std::vector<fs::path> artifacts{dir / kManifestName};
  for (const auto& r : records) artifacts.push_back(r.csv_path);
  write_run_manifest(dir, "generate", corpus_to_json(cfg), cfg.seed, artifacts);
  out << "wrote " << records.size() << " sessions to " << dir.string() << "\n";
  return kOk;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string data_dir;
  std::string out_dir;
  std::string grid;
  TrainFlags flags;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const TrainConfig cfg = resolve_config(ModelKind::baseline, a.flags);
  SweepOptions opts;
  opts.ratios = parse_split(a.flags.split);
  opts.session_level = a.flags.session_level;
  const auto grid = a.grid.empty() ? length_grid() : parse_grid(a.grid);
  const auto sessions = load_dataset(a.data_dir);

  opts.on_entry = [&](const SweepEntry& e) {
    out << "length " << e.length << "  val L1 " << fixed2(e.val_l1) << " ft  (" << e.windows
        << " windows)\n";
  };
  const SweepResult result = run_sweep(sessions, grid, cfg, opts);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  write_sweep_table(dir / "sweep.csv", result);
  json summary = {{"chosen_length", result.chosen_length}, {"skipped", result.skipped}};
  write_text(dir / "sweep_summary.json", summary.dump(2) + "\n");

  json config = config_json(cfg, opts.ratios, opts.session_level);
  config["grid"] = grid;
  config["data_dir"] = a.data_dir;
  write_run_manifest(dir, "sweep", config, cfg.seed,
                     {dir / "sweep.csv", dir / "sweep_summary.json"});
  for (auto len : result.skipped) out << "skipped length " << len << ": no session fits\n";
  out << "chosen length " << result.chosen_length << "\n";
  return kOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  std::string model = "cnn1d";
  std::optional<std::size_t> length;
  TrainFlags flags;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const ModelKind kind = parse_model_kind(a.model);
  std::size_t length = a.length.value_or(kind == ModelKind::cnn2d ? kSquareLength : kDefaultLength);
  if (kind == ModelKind::cnn2d && length != kSquareLength) {
    throw ConfigError("cnn2d needs length " + std::to_string(kSquareLength) + " (" +
                      std::to_string(kSquareSide) + " x " + std::to_string(kSquareSide) +
                      "); " + std::to_string(length) + " is not a square");
  }
  if (length < 2 || length % 2 != 0) throw ConfigError("--length must be even and >= 2");

  const TrainConfig cfg = resolve_config(kind, a.flags);
  const SplitRatios ratios = parse_split(a.flags.split);
  const ModelSpec spec = spec_for(kind, length, cfg.seed);
  const ShapeChain chain = shape_chain(spec);

  const auto sessions = load_dataset(a.data_dir);
  auto windows = make_windows(sessions, length);
  if (windows.empty()) {
    throw DataError("no session has a valid region of " + std::to_string(length) + " samples");
  }
  const DatasetSplit split = make_split(std::move(windows), ratios, cfg.seed, a.flags.session_level);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const fs::path ckpt = dir / "best.ckpt";
  json config = config_json(cfg, ratios, a.flags.session_level);
  config["model"] = a.model;
  config["length"] = length;
  config["data_dir"] = a.data_dir;

  TrainOptions opts;
  opts.checkpoint_path = ckpt;
  opts.checkpoint_metadata = config;
  opts.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << "  train " << fixed2(r.train_l1) << "  val " << fixed2(r.val_l1)
        << "\n";
  };

  Model model(spec);
  const TrainReport report = train(model, split, cfg, opts);

  write_loss_table(dir / "losses.csv", report);
  json summary = report_summary(report);
  summary["model"] = a.model;
  summary["length"] = length;
  summary["head_width"] = chain.head_width;
  summary["windows"] = {{"train", split.train.size()},
                        {"val", split.val.size()},
                        {"test", split.test.size()}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_run_manifest(dir, "train", config, cfg.seed,
                     {dir / "losses.csv", ckpt, dir / "summary.json"},
                     {{"head_width", chain.head_width}, {"parameters", model.parameter_count()}});

  out << "best val L1 " << fixed2(report.best_val_l1) << " ft at epoch " << report.best_epoch
      << ", test L1 " << fixed2(report.test_l1) << " ft (" << fixed2(report.wall_time_s)
      << " s)\n";
  return kOk;
}

// --- eval / predict ---------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string part = "test";
};

// Rebuilds the split recorded in the checkpoint and scores one part of it.
double evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data_dir,
                           const std::string& part) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const json& m = ck.metadata;
  std::size_t length = 0;
  SplitRatios ratios;
  std::uint64_t seed = 0;
  bool session_level = false;
  try {
    length = m.at("length").get<std::size_t>();
    const auto r = m.at("split").get<std::vector<double>>();
    if (r.size() != 3) throw ConfigError("checkpoint split must have three ratios");
    ratios = {r[0], r[1], r[2]};
    seed = m.at("seed").get<std::uint64_t>();
    session_level = m.value("session_level_split", false);
  } catch (const json::exception& e) {
    throw DataError(checkpoint.string() + ": metadata lacks split information (" + e.what() + ")");
  }
  const auto sessions = load_dataset(data_dir);
  DatasetSplit split = make_split(make_windows(sessions, length), ratios, seed, session_level);
  const std::vector<Window>* windows = nullptr;
  if (part == "train") windows = &split.train;
  if (part == "val") windows = &split.val;
  if (part == "test") windows = &split.test;
  if (windows == nullptr) throw ConfigError("--part must be train, val or test");
  if (windows->empty()) throw DataError("the " + part + " split is empty");
  return evaluate(ck.model, *windows);
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  out << fixed2(evaluate_checkpoint(a.checkpoint, a.data_dir, a.part)) << "\n";
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string window_csv;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const AccelSeries series = load_session(a.window_csv);
  const Shape in = ck.model.spec().input_shape();
  const std::size_t want = numel(in) / in[0];
  if (series.size() != want) {
    throw DataError(a.window_csv + ": window has " + std::to_string(series.size()) +
                    " samples, model expects " + std::to_string(want));
  }
  std::vector<double> values;
  values.reserve(kAxes * want);
  for (const auto& c : series.channels) values.insert(values.end(), c.begin(), c.end());
  Tensor window({kAxes, want}, std::move(values));
  if (ck.model.spec().kind == ModelKind::cnn2d) window = reshape_2d(window);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", predict(ck.model, window));
  out << buf << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Braking distance regression from accelerometer windows", "brakenet"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic session corpus");
  generate->add_option("--config", gen.config_file, "JSON generator config")->check(CLI::ExistingFile);
  generate->add_option("--out", gen.out_dir, "output directory")->required();
  generate->add_option("--seed", gen.seed);

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep", "train the linear baseline across window lengths");
  sweep->add_option("--data", sw.data_dir, "corpus directory")->required();
  sweep->add_option("--out", sw.out_dir, "output directory")->required();
  sweep->add_option("--grid", sw.grid, "comma-separated lengths (default: 21 log-spaced)");
  add_train_flags(*sweep, sw.flags);

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "train one model and keep the best checkpoint");
  trn->add_option("--data", tr.data_dir, "corpus directory")->required();
  trn->add_option("--out", tr.out_dir, "output directory")->required();
  trn->add_option("--model", tr.model)->check(CLI::IsMember({"baseline", "cnn1d", "cnn2d"}));
  trn->add_option("--length", tr.length, "window length in samples");
  add_train_flags(*trn, tr.flags);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "L1 of a checkpoint on its own split");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--data", ev.data_dir, "corpus directory")->required();
  eval->add_option("--part", ev.part)->check(CLI::IsMember({"train", "val", "test"}));

  PredictArgs pr;
  auto* pred = app.add_subcommand("predict", "braking distance for one window CSV");
  pred->add_option("--checkpoint", pr.checkpoint)->required();
  pred->add_option("--window", pr.window_csv, "CSV in session format")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    if (*sweep) return cmd_sweep(sw, out);
    if (*trn) return cmd_train(tr, out);
    if (*eval) return cmd_eval(ev, out);
    if (*pred) return cmd_predict(pr, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace brakenet::cli
