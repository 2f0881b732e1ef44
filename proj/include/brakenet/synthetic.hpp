#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "brakenet/data.hpp"

namespace brakenet {

// Synthetic stand-in for recorded driving sessions. Accelerations are in g.
//
// Constant-speed region, per axis c:
//   a_c(t) = A_c * v * r(t) + s(t) (+ pitch term on x)
// where r is unit-RMS resonator noise whose center frequency depends on the
// surface, A_c = {0.006, 0.008, 0.010} g per m/s, s is sensor noise and the
// x axis carries a road-load pitch offset kPitchPerMps2 * v^2 plus a random
// mounting offset. Samples are quantized to 1e-6 g.
//
// Label: v^2 / (2 mu g) converted to feet, plus Gaussian label noise.

inline constexpr double kGravity = 9.81;
inline constexpr double kSpeed15Mph = 6.71;
inline constexpr double kSpeed20Mph = 8.94;
inline constexpr double kSpeed25Mph = 11.2;

inline constexpr double kRmsPerMps = 0.01;
inline constexpr double kPitchPerMps2 = 5e-4;
inline constexpr double kMountOffsetSd = 0.002;
inline constexpr double kSensorNoiseSd = 0.002;
inline constexpr double kQuantum = 1e-6;

// Two-pole resonator: center frequency as a fraction of the sample rate.
struct SurfaceProfile {
  double center_fraction;
  double pole_radius;
};

// Asphalt: 0.18 fs, r 0.85 (coarse texture, high band).
// Concrete: 0.05 fs, r 0.92 (smooth slab, low band).
SurfaceProfile surface_profile(Surface surface);

// Lower bound on band_energy_ratio(asphalt) - band_energy_ratio(concrete) for
// any y or z window of at least 0.25 s. For a resonator the ratio is about
// 2 * (1 - 2 r cos(w) / (1 + r^2)): roughly 1.16 vs 0.10 here.
inline constexpr double kSpectralMargin = 0.5;
double default_friction(Surface surface);  // 0.7 asphalt, 0.8 concrete

struct GenConfig {
  Surface surface = Surface::asphalt;
  double speed_mps = kSpeed15Mph;
  double duration_s = 1.5;  // constant-speed region
  double sample_rate_hz = kSampleRateHz;
  double friction_mu = 0.7;
  double label_noise_ft = 0.5;
  std::uint64_t seed = 0;
  double lead_in_s = 0.1;  // unmarked driving before the valid region
  double braking_s = 0.4;  // recorded braking after it

  void validate() const;
};

GenConfig make_gen_config(Surface surface, double speed_mps, std::uint64_t seed);

struct GeneratedSession {
  AccelSeries series;
  double label_ft = 0.0;
  std::size_t valid_start = 0;
  std::size_t valid_stop = 0;
};

GeneratedSession gen_session(const GenConfig& cfg);

// Noise-free braking distance in feet.
double oracle_label(const GenConfig& cfg);

struct CorpusCell {
  Surface surface;
  double speed_mps;
  std::size_t sessions;
};

struct CorpusConfig {
  // When set, every (surface, speed) cell gets this many sessions; otherwise
  // 10/10/5 sessions at 15/20/25 mph per surface.
  std::optional<std::size_t> n_per_cell;
  double duration_s = 1.5;
  double label_noise_ft = 0.5;
  double speed_jitter_mps = 0.89;
  std::uint64_t seed = 0;
};

std::vector<CorpusCell> corpus_layout(const CorpusConfig& cfg);

// Writes session_NN.csv files and data_entry.csv into out_dir.
std::vector<SessionRecord> gen_corpus(const CorpusConfig& cfg,
                                      const std::filesystem::path& out_dir);

// Energy of the first difference over signal energy (after removing the
// mean). Higher means more high-frequency content.
double band_energy_ratio(std::span<const double> signal);

}  // namespace brakenet
