#include "brakenet/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "brakenet/checkpoint.hpp"
#include "brakenet/errors.hpp"
#include "brakenet/optim.hpp"

namespace brakenet {

namespace {

class ModeScope {
 public:
  ModeScope(Model& model, Mode mode) : model_(model), previous_(model.mode()) {
    model_.set_mode(mode);
  }
  ~ModeScope() { model_.set_mode(previous_); }

 private:
  Model& model_;
  Mode previous_;
};

// Activation buffers are tens of MB and reallocated every batch. Keeping them
// on the heap instead of fresh mmap pages avoids a page-fault storm.
void keep_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 for batch normalization");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
}

TrainConfig default_config(ModelKind kind) {
  TrainConfig cfg;
  cfg.epochs = kind == ModelKind::baseline ? 50 : 100;
  return cfg;
}

Tensor make_batch(const ModelSpec& spec, std::span<const Window> windows,
                  std::span<const std::size_t> indices) {
  const Shape sample = spec.input_shape();
  const std::size_t per = numel(sample);
  std::vector<double> values(indices.size() * per);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& w = windows[indices[i]].data;
    if (w.size() != per) {
      throw DimensionError("window of shape " + to_string(w.shape()) +
                           " does not fit model input " + to_string(sample));
    }
    std::copy(w.data().begin(), w.data().end(), values.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample.begin(), sample.end());
  return Tensor(std::move(shape), std::move(values));
}

double evaluate(Model& model, std::span<const Window> windows, std::size_t batch_size) {
  if (windows.empty()) throw ConfigError("cannot evaluate on an empty window list");
  keep_large_allocations();
  if (batch_size == 0) throw ConfigError("evaluation batch size must be positive");
  NoGradGuard no_grad;
  ModeScope scope(model, Mode::inference);
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t stop = std::min(windows.size(), start + batch_size);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    Tensor pred = model.forward(make_batch(model.spec(), windows, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      total += std::abs(pred[i] - windows[idx[i]].label_ft);
    }
  }
  return total / static_cast<double>(windows.size());
}

double predict(Model& model, const Tensor& window) {
  NoGradGuard no_grad;
  ModeScope scope(model, Mode::inference);
  std::vector<Window> one{{window, 0.0, {}, 0}};
  const std::size_t index = 0;
  return model.forward(make_batch(model.spec(), one, std::span(&index, 1))).item();
}

TrainReport train(Model& model, const DatasetSplit& split, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  keep_large_allocations();
  if (split.train.size() < 2) throw ConfigError("training split needs at least 2 windows");
  if (split.val.empty()) throw ConfigError("validation split is empty");
  if (split.test.empty()) throw ConfigError("test split is empty");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Tensor> params = model.parameters();
  SgdState optimizer(params, cfg.lr, cfg.momentum);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  std::optional<Model> best;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    model.set_mode(Mode::training);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2) break;  // batch norm needs two samples
      ++batch_no;
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      Tensor inputs = make_batch(model.spec(), split.train, idx);
      std::vector<double> labels(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = split.train[idx[i]].label_ft;
      Tensor targets({idx.size(), 1}, std::move(labels));

      zero_grad(params);
      Tensor loss = l1_loss(model.forward(inputs), targets);
      if (!std::isfinite(loss.item())) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
      }
      backward(loss);
      sgd_step(optimizer);
      loss_sum += loss.item() * static_cast<double>(idx.size());
      seen += idx.size();
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(seen), evaluate(model, split.val)};
    if (!std::isfinite(record.val_l1)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    report.history.push_back(record);
    if (!best || record.val_l1 < report.best_val_l1) {
      report.best_val_l1 = record.val_l1;
      report.best_epoch = epoch;
      best = model.clone();
      if (options.checkpoint_path) {
        nlohmann::json meta = options.checkpoint_metadata;
        meta["epoch"] = epoch;
        meta["val_l1"] = record.val_l1;
        save_checkpoint(*options.checkpoint_path, *best, meta);
      }
    }
    if (options.on_epoch) options.on_epoch(record);
  }

  model = std::move(*best);
  model.set_mode(Mode::inference);
  report.test_l1 = evaluate(model, split.test);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_loss_table(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_l1,val_l1\n";
  for (const auto& r : report.history) {
    out << r.epoch << ',' << format_number(r.train_l1) << ',' << format_number(r.val_l1) << '\n';
  }
}

nlohmann::json report_summary(const TrainReport& report) {
  return {{"epochs", report.history.size()},
          {"best_epoch", report.best_epoch},
          {"best_val_l1", report.best_val_l1},
          {"test_l1", report.test_l1}};
}

}  // namespace brakenet
