#include "brakenet/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "brakenet/errors.hpp"
#include "brakenet/parallel.hpp"

namespace brakenet {

namespace {

constexpr std::array<double, kAxes> kAxisGain{0.6, 0.8, 1.0};
constexpr std::size_t kWarmup = 256;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Divide by the step count so the result is the double nearest the decimal.
double quantize(double v) {
  const double steps = std::round(1.0 / kQuantum);
  return std::round(v * steps) / steps;
}

}  // namespace

SurfaceProfile surface_profile(Surface surface) {
  return surface == Surface::asphalt ? SurfaceProfile{0.18, 0.85} : SurfaceProfile{0.05, 0.92};
}

double default_friction(Surface surface) { return surface == Surface::asphalt ? 0.7 : 0.8; }

void GenConfig::validate() const {
  if (!(speed_mps > 0.0)) throw ConfigError("speed must be positive");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(friction_mu > 0.0 && friction_mu < 1.5)) throw ConfigError("friction must be in (0, 1.5)");
  if (!(label_noise_ft >= 0.0)) throw ConfigError("label noise must be nonnegative");
  if (lead_in_s < 0.0 || braking_s < 0.0) throw ConfigError("segment durations must be >= 0");
  if (std::llround(duration_s * sample_rate_hz) < static_cast<long long>(kMinValidSamples)) {
    throw ConfigError("constant-speed region must hold at least " +
                      std::to_string(kMinValidSamples) + " samples");
  }
}

GenConfig make_gen_config(Surface surface, double speed_mps, std::uint64_t seed) {
  GenConfig cfg;
  cfg.surface = surface;
  cfg.speed_mps = speed_mps;
  cfg.friction_mu = default_friction(surface);
  cfg.seed = seed;
  return cfg;
}

double oracle_label(const GenConfig& cfg) {
  const double meters = cfg.speed_mps * cfg.speed_mps / (2.0 * cfg.friction_mu * kGravity);
  return meters_to_feet(meters);
}

GeneratedSession gen_session(const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto lead = static_cast<std::size_t>(std::llround(cfg.lead_in_s * cfg.sample_rate_hz));
  const auto body = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate_hz));
  const auto brake = static_cast<std::size_t>(std::llround(cfg.braking_s * cfg.sample_rate_hz));
  const std::size_t total = lead + body + brake;

  GeneratedSession out;
  out.valid_start = lead;
  out.valid_stop = lead + body;
  out.series.time_s.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    out.series.time_s[i] = static_cast<double>(i) / cfg.sample_rate_hz;
  }

  // Speed profile: constant, then linear deceleration at mu * g.
  const double stop_time = cfg.speed_mps / (cfg.friction_mu * kGravity);
  auto speed_at = [&](std::size_t i) {
    if (i < lead + body) return cfg.speed_mps;
    const double t = static_cast<double>(i - lead - body) / cfg.sample_rate_hz;
    return std::max(0.0, cfg.speed_mps * (1.0 - t / stop_time));
  };

  const SurfaceProfile profile = surface_profile(cfg.surface);
  const double omega = 2.0 * std::numbers::pi * profile.center_fraction;
  const double a1 = 2.0 * profile.pole_radius * std::cos(omega);
  const double a2 = profile.pole_radius * profile.pole_radius;
  const double mount_offset = kMountOffsetSd * normal(rng);

  for (std::size_t axis = 0; axis < kAxes; ++axis) {
    std::vector<double> r(total);
    double y1 = 0.0, y2 = 0.0;
    for (std::size_t i = 0; i < kWarmup + total; ++i) {
      const double y = a1 * y1 - a2 * y2 + normal(rng);
      y2 = y1;
      y1 = y;
      if (i >= kWarmup) r[i - kWarmup] = y;
    }
    double ss = 0.0;
    for (std::size_t i = out.valid_start; i < out.valid_stop; ++i) ss += r[i] * r[i];
    const double norm = 1.0 / std::sqrt(ss / static_cast<double>(body));

    const double amp = kAxisGain[axis] * kRmsPerMps;
    auto& ch = out.series.channels[axis];
    ch.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      const double v = speed_at(i);
      double a = amp * v * r[i] * norm + kSensorNoiseSd * normal(rng);
      if (axis == 0) {
        a += kPitchPerMps2 * v * v + mount_offset;
        if (i >= lead + body && v > 0.0) a -= cfg.friction_mu;
      }
      ch[i] = quantize(a);
    }
  }

  out.label_ft = oracle_label(cfg);
  if (cfg.label_noise_ft > 0.0) out.label_ft += cfg.label_noise_ft * normal(rng);
  out.label_ft = std::max(0.0, out.label_ft);
  return out;
}

std::vector<CorpusCell> corpus_layout(const CorpusConfig& cfg) {
  std::vector<CorpusCell> cells;
  for (Surface s : {Surface::asphalt, Surface::concrete}) {
    const std::array<std::pair<double, std::size_t>, 3> speeds{
        {{kSpeed15Mph, 10}, {kSpeed20Mph, 10}, {kSpeed25Mph, 5}}};
    for (auto [v, n] : speeds) cells.push_back({s, v, cfg.n_per_cell.value_or(n)});
  }
  return cells;
}

std::vector<SessionRecord> gen_corpus(const CorpusConfig& cfg,
                                      const std::filesystem::path& out_dir) {
  if (cfg.speed_jitter_mps < 0.0) throw ConfigError("speed jitter must be nonnegative");
  std::vector<GenConfig> configs;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> jitter(-cfg.speed_jitter_mps, cfg.speed_jitter_mps);
  for (const auto& cell : corpus_layout(cfg)) {
    for (std::size_t k = 0; k < cell.sessions; ++k) {
      GenConfig g = make_gen_config(cell.surface, 0.0, splitmix64(cfg.seed + configs.size()));
      // Speeds are logged in mph with two decimals.
      const double mph = std::round(mps_to_mph(cell.speed_mps + jitter(rng)) * 100.0) / 100.0;
      g.speed_mps = mph_to_mps(mph);
      g.duration_s = cfg.duration_s;
      g.label_noise_ft = cfg.label_noise_ft;
      g.validate();
      configs.push_back(g);
    }
  }
  if (configs.empty()) throw ConfigError("corpus layout has no sessions");

  std::filesystem::create_directories(out_dir);
  std::vector<SessionRecord> records(configs.size());
  const int digits = configs.size() >= 100 ? 3 : 2;
  parallel_for(configs.size(), [&](std::size_t i) {
    GeneratedSession s = gen_session(configs[i]);
    char name[32];
    std::snprintf(name, sizeof(name), "session_%0*zu.csv", digits, i + 1);
    SessionRecord& r = records[i];
    r.csv_file = name;
    r.csv_path = out_dir / name;
    r.id = std::filesystem::path(name).stem().string();
    r.label_ft = s.label_ft;
    r.valid_start = s.valid_start;
    r.valid_stop = s.valid_stop;
    r.speed_mps = configs[i].speed_mps;
    r.surface = configs[i].surface;
    r.sample_rate_hz = configs[i].sample_rate_hz;
    write_session(r.csv_path, s.series);
  });
  write_manifest(out_dir / kManifestName, records);
  return records;
}

double band_energy_ratio(std::span<const double> signal) {
  if (signal.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());
  double energy = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    energy += (signal[i] - mean) * (signal[i] - mean);
    if (i > 0) diff += (signal[i] - signal[i - 1]) * (signal[i] - signal[i - 1]);
  }
  return energy > 0.0 ? diff / energy : 0.0;
}

}  // namespace brakenet
