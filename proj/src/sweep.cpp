#include "brakenet/sweep.hpp"

#include <chrono>
#include <charconv>
#include <fstream>

#include "brakenet/errors.hpp"

namespace brakenet {

std::size_t choose_length(std::span<const SweepEntry> entries) {
  if (entries.empty()) throw ConfigError("no sweep entries to choose from");
  const SweepEntry* best = &entries.front();
  for (const auto& e : entries) {
    if (e.val_l1 < best->val_l1 || (e.val_l1 == best->val_l1 && e.length < best->length)) {
      best = &e;
    }
  }
  return best->length;
}

SweepResult run_sweep(std::span<const LoadedSession> sessions, std::span<const std::size_t> grid,
                      const TrainConfig& cfg, const SweepOptions& options) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  cfg.validate();
  SweepResult result;
  for (std::size_t length : grid) {
    std::vector<Window> windows = make_windows(sessions, length);
    if (windows.empty()) {
      result.skipped.push_back(length);
      continue;
    }
    const std::size_t count = windows.size();
    DatasetSplit split = options.session_level
                             ? split_by_session(std::move(windows), options.ratios, cfg.seed)
                             : split_dataset(std::move(windows), options.ratios, cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    Model model = build_baseline(length, cfg.seed);
    SweepEntry entry;
    entry.length = length;
    entry.windows = count;
    entry.init_hash = model.state_hash();
    TrainReport report = train(model, split, cfg);
    entry.val_l1 = report.best_val_l1;
    entry.final_hash = model.state_hash();
    entry.train_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.on_entry) options.on_entry(entry);
    result.entries.push_back(entry);
  }
  if (result.entries.empty()) {
    throw DataError("no grid length fits any session's valid region");
  }
  result.chosen_length = choose_length(result.entries);
  return result;
}

void write_sweep_table(const std::filesystem::path& path, const SweepResult& result) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "length,val_l1\n";
  for (const auto& e : result.entries) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), e.val_l1);
    out << e.length << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
  }
}

}  // namespace brakenet
