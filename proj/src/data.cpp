#include "brakenet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "brakenet/errors.hpp"

namespace brakenet {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed for " + path.string());
}

// Splits text into lines, tolerating CRLF and a trailing newline.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = line.find(',', pos);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, end - pos));
    pos = end + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
  }
  return fields;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(where(path, line) + ": not a number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(value)) {
    throw ParseError(where(path, line) + ": not a finite number: '" + std::string(text) + "'");
  }
  return value;
}

std::size_t parse_index(std::string_view text, const std::filesystem::path& path,
                        std::size_t line) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(where(path, line) + ": not a sample index: '" + std::string(text) + "'");
  }
  return value;
}

// Maps required header names to column positions.
std::vector<std::size_t> column_positions(std::string_view header_line,
                                          const std::vector<std::string_view>& required,
                                          const std::filesystem::path& path) {
  auto header = split_fields(header_line);
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].remove_prefix(3);
  std::vector<std::size_t> positions;
  for (auto name : required) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw SchemaError(path.string() + ": missing column '" + std::string(name) + "'");
    }
    positions.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  return positions;
}

std::vector<std::string_view> split_names(std::string_view header) {
  std::vector<std::string_view> names;
  for (auto f : split_fields(header)) names.push_back(f);
  return names;
}

void append_number(std::string& out, double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

}  // namespace

std::string_view to_string(Surface surface) {
  return surface == Surface::asphalt ? "asphalt" : "concrete";
}

Surface parse_surface(std::string_view text) {
  if (text == "asphalt") return Surface::asphalt;
  if (text == "concrete") return Surface::concrete;
  throw ParseError("unknown surface '" + std::string(text) + "'");
}

std::vector<SessionRecord> load_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  auto lines = split_lines(text);
  if (lines.empty()) throw SchemaError(path.string() + ": empty manifest");
  const auto required = split_names(kManifestHeader);
  const auto cols = column_positions(lines[0], required, path);
  const std::size_t width = split_fields(lines[0]).size();
  const auto base = path.parent_path();

  std::vector<SessionRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    auto f = split_fields(lines[i]);
    if (f.size() != width) {
      throw ParseError(where(path, line_no) + ": expected " + std::to_string(width) +
                       " fields, got " + std::to_string(f.size()));
    }
    SessionRecord r;
    r.label_ft = parse_double(f[cols[0]], path, line_no);
    r.csv_file = std::string(f[cols[1]]);
    r.valid_start = parse_index(f[cols[2]], path, line_no);
    r.valid_stop = parse_index(f[cols[3]], path, line_no);
    r.speed_mps = mph_to_mps(parse_double(f[cols[4]], path, line_no));
    try {
      r.surface = parse_surface(f[cols[5]]);
    } catch (const ParseError& e) {
      throw ParseError(where(path, line_no) + ": " + e.what());
    }
    if (r.csv_file.empty()) throw ParseError(where(path, line_no) + ": empty csv_file");
    if (!(r.label_ft >= 0.0)) {
      throw RangeError(where(path, line_no) + ": label_ft must be nonnegative");
    }
    if (r.valid_start >= r.valid_stop) {
      throw RangeError(where(path, line_no) + ": valid_start " + std::to_string(r.valid_start) +
                       " must be below valid_stop " + std::to_string(r.valid_stop));
    }
    if (r.valid_length() < kMinValidSamples) {
      throw RangeError(where(path, line_no) + ": valid region of " +
                       std::to_string(r.valid_length()) + " samples is shorter than " +
                       std::to_string(kMinValidSamples));
    }
    r.csv_path = base / r.csv_file;
    r.id = std::filesystem::path(r.csv_file).stem().string();
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const std::filesystem::path& path, std::span<const SessionRecord> records) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : records) {
    append_number(out, r.label_ft);
    out += ',';
    out += r.csv_file;
    out += ',';
    out += std::to_string(r.valid_start);
    out += ',';
    out += std::to_string(r.valid_stop);
    out += ',';
    append_number(out, mps_to_mph(r.speed_mps));
    out += ',';
    out += to_string(r.surface);
    out += '\n';
  }
  write_file(path, out);
}

AccelSeries load_session(const std::filesystem::path& csv_path) {
  const std::string text = read_file(csv_path);
  auto lines = split_lines(text);
  if (lines.empty()) throw SchemaError(csv_path.string() + ": empty session file");
  const auto cols = column_positions(lines[0], split_names(kSessionHeader), csv_path);
  const std::size_t width = split_fields(lines[0]).size();

  AccelSeries series;
  series.time_s.reserve(lines.size() - 1);
  for (auto& c : series.channels) c.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto f = split_fields(lines[i]);
    if (f.size() != width) {
      throw ParseError(where(csv_path, line_no) + ": expected " + std::to_string(width) +
                       " fields, got " + std::to_string(f.size()));
    }
    const double t = parse_double(f[cols[0]], csv_path, line_no);
    if (!series.time_s.empty() && !(t > series.time_s.back())) {
      throw ParseError(where(csv_path, line_no) + ": time_s is not increasing");
    }
    series.time_s.push_back(t);
    for (std::size_t a = 0; a < kAxes; ++a) {
      series.channels[a].push_back(parse_double(f[cols[a + 1]], csv_path, line_no));
    }
  }
  return series;
}

void write_session(const std::filesystem::path& csv_path, const AccelSeries& series) {
  for (const auto& c : series.channels) {
    if (c.size() != series.size()) throw DataError("channel length differs from time vector");
  }
  std::string out(kSessionHeader);
  out += '\n';
  out.reserve(series.size() * 48);
  for (std::size_t i = 0; i < series.size(); ++i) {
    append_number(out, series.time_s[i]);
    for (const auto& c : series.channels) {
      out += ',';
      append_number(out, c[i]);
    }
    out += '\n';
  }
  write_file(csv_path, out);
}

std::vector<LoadedSession> load_dataset(const std::filesystem::path& data_dir) {
  const auto manifest = data_dir / kManifestName;
  if (!std::filesystem::exists(manifest)) {
    throw DataError("no " + std::string(kManifestName) + " in " + data_dir.string());
  }
  std::vector<LoadedSession> out;
  for (auto& record : load_manifest(manifest)) {
    AccelSeries series = load_session(record.csv_path);
    if (record.valid_stop > series.size()) {
      throw RangeError(record.csv_file + ": valid_stop " + std::to_string(record.valid_stop) +
                       " exceeds series length " + std::to_string(series.size()));
    }
    out.push_back({std::move(record), std::move(series)});
  }
  if (out.empty()) throw DataError(manifest.string() + " lists no sessions");
  return out;
}

std::size_t window_count(std::size_t region, std::size_t length) {
  if (length == 0 || length > region) return 0;
  const std::size_t hop = length / 2;
  return (region - length) / hop + 1;
}

std::optional<std::vector<Window>> segment_windows(const AccelSeries& series,
                                                   std::size_t valid_start,
                                                   std::size_t valid_stop, std::size_t length,
                                                   double label_ft,
                                                   const std::string& session_id) {
  if (length < 2 || length % 2 != 0) {
    throw ConfigError("window length must be even and at least 2, got " + std::to_string(length));
  }
  if (valid_start >= valid_stop || valid_stop > series.size()) {
    throw RangeError("valid range [" + std::to_string(valid_start) + ", " +
                     std::to_string(valid_stop) + ") does not fit a series of " +
                     std::to_string(series.size()) + " samples");
  }
  const std::size_t region = valid_stop - valid_start;
  const std::size_t count = window_count(region, length);
  if (count == 0) return std::nullopt;

  const std::size_t hop = length / 2;
  std::vector<Window> windows;
  windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = valid_start + k * hop;
    std::vector<double> values(kAxes * length);
    for (std::size_t a = 0; a < kAxes; ++a) {
      const auto& ch = series.channels[a];
      std::copy_n(ch.begin() + static_cast<std::ptrdiff_t>(start), length,
                  values.begin() + static_cast<std::ptrdiff_t>(a * length));
    }
    windows.push_back({Tensor({kAxes, length}, std::move(values)), label_ft, session_id, start});
  }
  return windows;
}

std::vector<Window> make_windows(std::span<const LoadedSession> sessions, std::size_t length) {
  std::vector<Window> all;
  for (const auto& s : sessions) {
    auto w = segment_windows(s.series, s.record.valid_start, s.record.valid_stop, length,
                             s.record.label_ft, s.record.id);
    if (!w) continue;
    all.insert(all.end(), std::make_move_iterator(w->begin()), std::make_move_iterator(w->end()));
  }
  return all;
}

double length_grid_raw(std::size_t k, std::size_t min, std::size_t max, std::size_t n) {
  if (n < 2) return static_cast<double>(min);
  const double ratio = static_cast<double>(max) / static_cast<double>(min);
  return static_cast<double>(min) *
         std::pow(ratio, static_cast<double>(k) / static_cast<double>(n - 1));
}

std::vector<std::size_t> length_grid(std::size_t min, std::size_t max, std::size_t n) {
  if (min < 2 || max < min || n == 0) {
    throw ConfigError("length grid needs 2 <= min <= max and n >= 1");
  }
  std::vector<std::size_t> grid;
  for (std::size_t k = 0; k < n; ++k) {
    auto v = static_cast<std::size_t>(std::llround(length_grid_raw(k, min, max, n)));
    if (v % 2 != 0) ++v;
    if (grid.empty() || grid.back() != v) grid.push_back(v);
  }
  return grid;
}

Tensor reshape_2d(const Tensor& window) {
  if (window.rank() != 2 || window.dim(0) != kAxes || window.dim(1) != kSquareLength) {
    throw DimensionError("reshape_2d needs a [3 x " + std::to_string(kSquareLength) +
                         "] window, got " + to_string(window.shape()));
  }
  auto d = window.data();
  return Tensor({kAxes, kSquareSide, kSquareSide}, std::vector<double>(d.begin(), d.end()));
}

Tensor flatten_2d(const Tensor& square) {
  if (square.rank() != 3) {
    throw DimensionError("flatten_2d needs [C x H x W], got " + to_string(square.shape()));
  }
  auto d = square.data();
  return Tensor({square.dim(0), square.dim(1) * square.dim(2)},
                std::vector<double>(d.begin(), d.end()));
}

void validate_ratios(const SplitRatios& r) {
  if (r.train < 0.0 || r.val < 0.0 || r.test < 0.0) {
    throw ConfigError("split ratios must be nonnegative");
  }
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
}

namespace {

// Largest-remainder allocation: each part gets floor(n * ratio) and the
// leftover goes to the largest fractional parts (train first on ties), so
// every size is within one element of n * ratio.
std::array<std::size_t, 3> allocate(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> exact{static_cast<double>(n) * r.train,
                                    static_cast<double>(n) * r.val,
                                    static_cast<double>(n) * r.test};
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(exact[i] + 1e-9));
    used += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[a] - static_cast<double>(sizes[a]) > exact[b] - static_cast<double>(sizes[b]);
  });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 3]];
  return sizes;
}

}  // namespace

DatasetSplit split_dataset(std::vector<Window> windows, SplitRatios ratios, std::uint64_t seed) {
  validate_ratios(ratios);
  const std::size_t n = windows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto [n_train, n_val, n_test] = allocate(n, ratios);

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
    dst.push_back(std::move(windows[order[i]]));
  }
  return split;
}

DatasetSplit split_by_session(std::vector<Window> windows, SplitRatios ratios,
                              std::uint64_t seed) {
  validate_ratios(ratios);
  std::vector<std::string> ids;
  for (const auto& w : windows) {
    if (std::find(ids.begin(), ids.end(), w.session_id) == ids.end()) ids.push_back(w.session_id);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const std::size_t n = ids.size();
  const auto [n_train, n_val, n_test] = allocate(n, ratios);
  std::unordered_map<std::string, int> part;
  for (std::size_t i = 0; i < n; ++i) part[ids[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  for (auto& w : windows) {
    int p = part[w.session_id];
    (p == 0 ? split.train : p == 1 ? split.val : split.test).push_back(std::move(w));
  }
  return split;
}

}  // namespace brakenet
