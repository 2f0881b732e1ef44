#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "brakenet/data.hpp"
#include "brakenet/models.hpp"

namespace brakenet {

struct TrainConfig {
  int epochs = 100;  // 50 for the baseline, see default_config
  std::size_t batch_size = 32;
  double lr = 5e-6;
  double momentum = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

TrainConfig default_config(ModelKind kind);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_l1 = 0.0;
  double val_l1 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_l1 = 0.0;
  double test_l1 = 0.0;
  double wall_time_s = 0.0;
};

struct TrainOptions {
  // Written every time validation L1 improves.
  std::optional<std::filesystem::path> checkpoint_path;
  // Extra metadata stored alongside the checkpoint.
  nlohmann::json checkpoint_metadata = nlohmann::json::object();
  std::function<void(const EpochRecord&)> on_epoch;
};

// Stacks window data into a model batch ([N,3,L] or [N,3,H,W]).
Tensor make_batch(const ModelSpec& spec, std::span<const Window> windows,
                  std::span<const std::size_t> indices);

// Mini-batch SGD on L1 loss. The model ends in inference mode holding the
// best-validation parameters; test_l1 is measured on those.
TrainReport train(Model& model, const DatasetSplit& split, const TrainConfig& cfg,
                  const TrainOptions& options = {});

// Mean |prediction - label| in feet, inference mode.
double evaluate(Model& model, std::span<const Window> windows, std::size_t batch_size = 32);

// Single window [3 x L] (or [3 x H x W] for cnn2d) -> feet.
double predict(Model& model, const Tensor& window);

// Per-epoch table: "epoch,train_l1,val_l1".
void write_loss_table(const std::filesystem::path& path, const TrainReport& report);
nlohmann::json report_summary(const TrainReport& report);

}  // namespace brakenet
