#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "brakenet/data.hpp"
#include "brakenet/training.hpp"

namespace brakenet {

struct SweepEntry {
  std::size_t length = 0;
  double val_l1 = 0.0;  // best validation L1 of the run, feet
  double train_time_s = 0.0;
  std::size_t windows = 0;
  std::uint64_t init_hash = 0;   // freshly built baseline
  std::uint64_t final_hash = 0;  // best checkpoint after training
};

struct SweepResult {
  std::vector<SweepEntry> entries;   // grid order
  std::vector<std::size_t> skipped;  // lengths no session could fit
  std::size_t chosen_length = 0;
};

struct SweepOptions {
  SplitRatios ratios;
  bool session_level = false;
  std::function<void(const SweepEntry&)> on_entry;
};

// Argmin of val_l1; ties go to the smaller length.
std::size_t choose_length(std::span<const SweepEntry> entries);

// For every grid length: window all sessions, split with cfg.seed, train a
// fresh baseline for cfg.epochs and record its best validation L1.
SweepResult run_sweep(std::span<const LoadedSession> sessions, std::span<const std::size_t> grid,
                      const TrainConfig& cfg, const SweepOptions& options = {});

// Two-column CSV "length,val_l1".
void write_sweep_table(const std::filesystem::path& path, const SweepResult& result);

}  // namespace brakenet
