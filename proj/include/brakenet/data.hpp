#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brakenet/tensor.hpp"

namespace brakenet {

inline constexpr double kSampleRateHz = 25000.0;
// 1.5 s of constant-speed driving at 25 kHz.
inline constexpr std::size_t kMinValidSamples = 37500;
inline constexpr double kMetersPerFoot = 0.3048;
inline constexpr double kMetersPerSecondPerMph = 0.44704;
inline constexpr std::size_t kAxes = 3;

inline double feet_to_meters(double ft) { return ft * kMetersPerFoot; }
inline double meters_to_feet(double m) { return m / kMetersPerFoot; }
inline double mph_to_mps(double mph) { return mph * kMetersPerSecondPerMph; }
inline double mps_to_mph(double mps) { return mps / kMetersPerSecondPerMph; }

enum class Surface { asphalt, concrete };

std::string_view to_string(Surface surface);
Surface parse_surface(std::string_view text);

struct SessionRecord {
  std::string id;        // csv file stem
  std::string csv_file;  // as written in the manifest
  std::filesystem::path csv_path;  // resolved against the manifest directory
  double label_ft = 0.0;
  std::size_t valid_start = 0;
  std::size_t valid_stop = 0;
  double speed_mps = 0.0;
  Surface surface = Surface::asphalt;
  double sample_rate_hz = kSampleRateHz;

  std::size_t valid_length() const { return valid_stop - valid_start; }
};

struct AccelSeries {
  std::vector<double> time_s;
  std::array<std::vector<double>, kAxes> channels;  // x, y, z

  std::size_t size() const { return time_s.size(); }
};

// One labeled [3 x L] slice of a session's valid region.
struct Window {
  Tensor data;
  double label_ft = 0.0;
  std::string session_id;
  std::size_t start = 0;  // absolute sample offset in the session

  std::size_t length() const { return data.dim(1); }
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  std::vector<Window> train;
  std::vector<Window> val;
  std::vector<Window> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

struct LoadedSession {
  SessionRecord record;
  AccelSeries series;
};

inline constexpr std::string_view kManifestName = "data_entry.csv";
inline constexpr std::string_view kManifestHeader =
    "label_ft,csv_file,valid_start,valid_stop,speed_mph,surface";
inline constexpr std::string_view kSessionHeader = "time_s,accel_x,accel_y,accel_z";

// Rows are validated as they are read; errors name the 1-based file line.
std::vector<SessionRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const SessionRecord> records);

AccelSeries load_session(const std::filesystem::path& csv_path);
// Values are written in shortest round-trip form, so reading back is exact.
void write_session(const std::filesystem::path& csv_path, const AccelSeries& series);

// Reads <dir>/data_entry.csv and every session it lists; checks that each
// valid range fits its series.
std::vector<LoadedSession> load_dataset(const std::filesystem::path& data_dir);

// Number of half-overlapping windows of `length` in a region of `region` samples.
std::size_t window_count(std::size_t region, std::size_t length);

// Windows start at valid_start + k * length / 2; the trailing remainder is
// dropped. Returns nullopt when the region is shorter than one window.
std::optional<std::vector<Window>> segment_windows(const AccelSeries& series,
                                                   std::size_t valid_start,
                                                   std::size_t valid_stop, std::size_t length,
                                                   double label_ft,
                                                   const std::string& session_id = {});

// All windows of every session long enough for `length`, in session order.
std::vector<Window> make_windows(std::span<const LoadedSession> sessions, std::size_t length);

// Log-spaced window lengths, rounded, deduplicated, odd values bumped to even.
std::vector<std::size_t> length_grid(std::size_t min = 100, std::size_t max = 25000,
                                     std::size_t n = 21);
double length_grid_raw(std::size_t k, std::size_t min = 100, std::size_t max = 25000,
                       std::size_t n = 21);

inline constexpr std::size_t kSquareSide = 100;
inline constexpr std::size_t kSquareLength = kSquareSide * kSquareSide;

// [3 x 10000] -> [3 x 100 x 100], rows stacked in order.
Tensor reshape_2d(const Tensor& window);
// [3 x H x W] -> [3 x H*W]
Tensor flatten_2d(const Tensor& square);

// Window-level shuffle; part sizes are within one element of n * ratio.
DatasetSplit split_dataset(std::vector<Window> windows, SplitRatios ratios, std::uint64_t seed);
// Whole sessions are assigned to one split; session counts follow the ratios.
DatasetSplit split_by_session(std::vector<Window> windows, SplitRatios ratios,
                              std::uint64_t seed);

void validate_ratios(const SplitRatios& ratios);

}  // namespace brakenet
