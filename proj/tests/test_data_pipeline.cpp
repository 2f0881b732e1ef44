#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "brakenet/data.hpp"
#include "brakenet/errors.hpp"
#include "support.hpp"

using namespace brakenet;
using brakenet::testing::spit;
using brakenet::testing::TempDir;

namespace {

AccelSeries ramp_series(std::size_t n) {
  AccelSeries s;
  s.time_s.resize(n);
  for (auto& c : s.channels) c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.time_s[i] = static_cast<double>(i) / kSampleRateHz;
    for (std::size_t a = 0; a < kAxes; ++a) s.channels[a][i] = static_cast<double>(a * 1000000 + i);
  }
  return s;
}

// Every start offset a sliding window of `length` with hop length/2 can take.
std::vector<std::size_t> brute_force_starts(std::size_t n, std::size_t length) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + length <= n; s += length / 2) starts.push_back(s);
  return starts;
}

std::vector<Window> numbered_windows(std::size_t n, std::size_t sessions = 1) {
  std::vector<Window> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({Tensor({3, 2}, std::vector<double>(6, double(i))), double(i),
                   "s" + std::to_string(i % sessions), i});
  }
  return out;
}

std::multiset<double> labels(const std::vector<Window>& w) {
  std::multiset<double> out;
  for (const auto& x : w) out.insert(x.label_ft);
  return out;
}

const std::string kHeader = "label_ft,csv_file,valid_start,valid_stop,speed_mph,surface\n";

}  // namespace

TEST_CASE("manifest rows map to records") {
  TempDir dir("manifest");
  spit(dir / "data_entry.csv", kHeader + "10.0,s01.csv,0,125000,15,asphalt\n");
  auto records = load_manifest(dir / "data_entry.csv");
  REQUIRE(records.size() == 1);
  CHECK(records[0].label_ft == 10.0);
  CHECK(records[0].csv_file == "s01.csv");
  CHECK(records[0].id == "s01");
  CHECK(records[0].valid_start == 0);
  CHECK(records[0].valid_stop == 125000);
  CHECK(records[0].speed_mps == doctest::Approx(6.7056));
  CHECK(records[0].surface == Surface::asphalt);
  CHECK(records[0].csv_path == dir / "s01.csv");
}

TEST_CASE("manifest with 50 rows gives 50 records") {
  TempDir dir("manifest50");
  std::string text = kHeader;
  for (int i = 0; i < 50; ++i) {
    text += std::to_string(10 + i) + ",s" + std::to_string(i) + ".csv,100,40000,20," +
            (i < 25 ? "asphalt" : "concrete") + "\n";
  }
  spit(dir / "data_entry.csv", text);
  auto records = load_manifest(dir / "data_entry.csv");
  CHECK(records.size() == 50);
  CHECK(records[30].surface == Surface::concrete);
}

TEST_CASE("manifest errors") {
  TempDir dir("manifest_err");
  const auto path = dir / "data_entry.csv";

  spit(path, kHeader + "10,a.csv,0,40000,15,asphalt\n12,b.csv,50000,100,15,asphalt\n");
  try {
    load_manifest(path);
    FAIL("expected a range error");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  spit(path, "label_ft,csv_file,valid_start,speed_mph,surface\n10,a.csv,0,15,asphalt\n");
  CHECK_THROWS_AS(load_manifest(path), SchemaError);

  spit(path, kHeader + "ten,a.csv,0,40000,15,asphalt\n");
  CHECK_THROWS_AS(load_manifest(path), ParseError);

  spit(path, kHeader + "10,a.csv,0,40000,15\n");
  CHECK_THROWS_AS(load_manifest(path), ParseError);

  spit(path, kHeader + "10,a.csv,0,40000,15,gravel\n");
  CHECK_THROWS_AS(load_manifest(path), ParseError);

  // Valid region shorter than 1.5 s.
  spit(path, kHeader + "10,a.csv,0,37499,15,asphalt\n");
  CHECK_THROWS_AS(load_manifest(path), RangeError);

  CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), DataError);
}

TEST_CASE("session files") {
  TempDir dir("session");
  const auto path = dir / "s.csv";

  std::string text = "time_s,accel_x,accel_y,accel_z\n";
  for (int i = 0; i < 100; ++i) {
    text += std::to_string(i * 0.00004) + "," + std::to_string(i) + ",0.5,-1e-3\n";
  }
  spit(path, text);
  AccelSeries s = load_session(path);
  CHECK(s.size() == 100);
  CHECK(s.channels[0][7] == 7.0);
  CHECK(s.channels[2][99] == -0.001);

  spit(path, "time_s,accel_x,accel_y\n0,1,2\n");
  CHECK_THROWS_AS(load_session(path), SchemaError);

  spit(path, "time_s,accel_x,accel_y,accel_z\n0,1,2,3\n0.1,1,2\n");
  CHECK_THROWS_AS(load_session(path), ParseError);

  spit(path, "time_s,accel_x,accel_y,accel_z\n0,1,2,3\n0.1,1,x,3\n");
  try {
    load_session(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  spit(path, "time_s,accel_x,accel_y,accel_z\n0,1,2,3\n0.1,nan,2,3\n");
  CHECK_THROWS_AS(load_session(path), ParseError);

  spit(path, "time_s,accel_x,accel_y,accel_z\n0.1,1,2,3\n0.1,1,2,3\n");
  CHECK_THROWS_AS(load_session(path), ParseError);
}

TEST_CASE("session round trip is exact") {
  TempDir dir("roundtrip");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 0.3);
  AccelSeries s;
  for (int i = 0; i < 2000; ++i) {
    s.time_s.push_back(i / kSampleRateHz);
    for (auto& c : s.channels) c.push_back(normal(rng));
  }
  s.channels[1][5] = 1e-300;
  s.channels[2][6] = -0.0;
  write_session(dir / "s.csv", s);
  AccelSeries back = load_session(dir / "s.csv");
  CHECK(back.time_s == s.time_s);
  for (std::size_t a = 0; a < kAxes; ++a) CHECK(back.channels[a] == s.channels[a]);

  SessionRecord r;
  r.csv_file = "s.csv";
  r.label_ft = 16.123456789;
  r.valid_start = 3;
  r.valid_stop = 40000;
  r.speed_mps = mph_to_mps(19.87);
  r.surface = Surface::concrete;
  write_manifest(dir / "data_entry.csv", std::span(&r, 1));
  auto loaded = load_manifest(dir / "data_entry.csv");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].label_ft == r.label_ft);
  CHECK(loaded[0].speed_mps == doctest::Approx(r.speed_mps).epsilon(1e-15));
  CHECK(loaded[0].surface == r.surface);
}

TEST_CASE("window count examples") {
  CHECK(window_count(125000, 6288) == 38);
  CHECK(window_count(6288, 6288) == 1);
  CHECK(window_count(2 * 6288, 6288) == 3);
  CHECK(window_count(100, 102) == 0);

  AccelSeries s = ramp_series(200);
  auto w = segment_windows(s, 0, 200, 100, 5.0);
  REQUIRE(w.has_value());
  REQUIRE(w->size() == 3);
  CHECK((*w)[0].start == 0);
  CHECK((*w)[1].start == 50);
  CHECK((*w)[2].start == 100);

  CHECK_FALSE(segment_windows(s, 0, 200, 202, 5.0).has_value());
  CHECK_THROWS_AS(segment_windows(s, 0, 200, 101, 5.0), ConfigError);
  CHECK_THROWS_AS(segment_windows(s, 0, 201, 100, 5.0), RangeError);
}

TEST_CASE("windowing matches brute-force enumeration") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> len_dist(1, 20000);
  const auto grid = length_grid();
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = len_dist(rng);
    const std::size_t offset = trial * 7;
    AccelSeries s = ramp_series(n + offset + 13);
    for (std::size_t length : grid) {
      const auto want = brute_force_starts(n, length);
      CHECK(window_count(n, length) == want.size());
      auto got = segment_windows(s, offset, offset + n, length, 3.5, "x");
      if (want.empty()) {
        CHECK_FALSE(got.has_value());
        continue;
      }
      REQUIRE(got.has_value());
      REQUIRE(got->size() == want.size());
      for (std::size_t k = 0; k < want.size(); ++k) {
        const Window& win = (*got)[k];
        CHECK(win.start == offset + want[k]);
        CHECK(win.label_ft == 3.5);
        CHECK(win.start + length <= offset + n);
        // Raw values, no scaling: channel a at sample i holds a*1e6 + i.
        CHECK(win.data[0] == double(win.start));
        CHECK(win.data[2 * length + length - 1] == double(2000000 + win.start + length - 1));
      }
      // Neighbours share exactly half a window.
      if (got->size() >= 2) {
        const auto& a = (*got)[0].data;
        const auto& b = (*got)[1].data;
        const std::size_t hop = length / 2;
        for (std::size_t ch = 0; ch < kAxes; ++ch) {
          CHECK(a[ch * length + hop] == b[ch * length]);
          CHECK(a[ch * length + length - 1] == b[ch * length + hop - 1]);
        }
      }
    }
  }
}

TEST_CASE("length grid") {
  const auto grid = length_grid();
  REQUIRE(grid.size() == 21);
  CHECK(grid.front() == 100);
  CHECK(grid.back() == 25000);
  CHECK(grid[15] == 6288);
  CHECK(length_grid_raw(15) == doctest::Approx(100.0 * std::pow(250.0, 0.75)));
  CHECK(std::llround(length_grid_raw(15)) == 6287);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  for (auto v : grid) CHECK(v % 2 == 0);
  CHECK(length_grid(100, 100, 1) == std::vector<std::size_t>{100});
  CHECK_THROWS_AS(length_grid(1, 100, 5), ConfigError);
}

TEST_CASE("2d reshape") {
  std::vector<double> v(3 * kSquareLength);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i % kSquareLength);
  Tensor w({3, kSquareLength}, v);
  Tensor sq = reshape_2d(w);
  CHECK(sq.shape() == Shape{3, 100, 100});
  for (std::size_t j = 0; j < 100; ++j) CHECK(sq[j] == double(j));
  CHECK(sq[100 * 37 + 5] == double(3705));
  Tensor back = flatten_2d(sq);
  CHECK(back.shape() == w.shape());
  CHECK(std::equal(back.data().begin(), back.data().end(), w.data().begin()));
  CHECK_THROWS_AS(reshape_2d(Tensor({3, 6288})), DimensionError);
}

TEST_CASE("window-level split") {
  auto split = split_dataset(numbered_windows(100), {}, 7);
  CHECK(split.train.size() == 70);
  CHECK(split.val.size() == 15);
  CHECK(split.test.size() == 15);

  std::multiset<double> all = labels(split.train);
  for (double l : labels(split.val)) all.insert(l);
  for (double l : labels(split.test)) all.insert(l);
  CHECK(all == labels(numbered_windows(100)));
  CHECK(std::set<double>(all.begin(), all.end()).size() == 100);

  auto again = split_dataset(numbered_windows(100), {}, 7);
  CHECK(labels(again.val) == labels(split.val));
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(split.train[i].label_ft == again.train[i].label_ft);
  }

  auto all_train = split_dataset(numbered_windows(10), {1.0, 0.0, 0.0}, 1);
  CHECK(all_train.train.size() == 10);
  CHECK(all_train.val.empty());
  CHECK(all_train.test.empty());

  CHECK_THROWS_AS(split_dataset(numbered_windows(10), {0.7, 0.2, 0.2}, 1), ConfigError);
}

TEST_CASE("split sizes stay within one element of the ratios") {
  for (std::size_t n = 0; n < 300; ++n) {
    for (SplitRatios r : {SplitRatios{}, SplitRatios{0.5, 0.25, 0.25}, SplitRatios{0.8, 0.1, 0.1},
                          SplitRatios{0.6, 0.3, 0.1}}) {
      auto s = split_dataset(numbered_windows(n), r, n);
      CHECK(s.train.size() + s.val.size() + s.test.size() == n);
      CHECK(std::abs(double(s.train.size()) - r.train * n) < 1.0 + 1e-9);
      CHECK(std::abs(double(s.val.size()) - r.val * n) < 1.0 + 1e-9);
      CHECK(std::abs(double(s.test.size()) - r.test * n) < 1.0 + 1e-9);
    }
  }
}

TEST_CASE("different seeds reorder the split") {
  auto base = split_dataset(numbered_windows(60), {}, 0);
  int differing = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto other = split_dataset(numbered_windows(60), {}, seed);
    bool same = true;
    for (std::size_t i = 0; i < base.train.size(); ++i) {
      same = same && base.train[i].label_ft == other.train[i].label_ft;
    }
    differing += same ? 0 : 1;
  }
  CHECK(differing == 10);
}

TEST_CASE("session-level split keeps sessions whole") {
  auto split = split_by_session(numbered_windows(200, 20), {}, 3);
  auto ids = [](const std::vector<Window>& w) {
    std::set<std::string> out;
    for (const auto& x : w) out.insert(x.session_id);
    return out;
  };
  auto tr = ids(split.train), va = ids(split.val), te = ids(split.test);
  CHECK(tr.size() == 14);
  CHECK(va.size() == 3);
  CHECK(te.size() == 3);
  for (const auto& id : va) CHECK(tr.count(id) == 0);
  for (const auto& id : te) CHECK(tr.count(id) == 0);
  for (const auto& id : te) CHECK(va.count(id) == 0);
  CHECK(split.train.size() + split.val.size() + split.test.size() == 200);
}

TEST_CASE("load_dataset checks ranges against the series") {
  TempDir dir("dataset");
  write_session(dir / "a.csv", ramp_series(40000));
  spit(dir / "data_entry.csv", kHeader + "10,a.csv,0,40000,15,asphalt\n");
  auto ds = load_dataset(dir.path());
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].series.size() == 40000);
  CHECK(make_windows(ds, 6288).size() == window_count(40000, 6288));

  spit(dir / "data_entry.csv", kHeader + "10,a.csv,100,40001,15,asphalt\n");
  CHECK_THROWS_AS(load_dataset(dir.path()), RangeError);

  TempDir empty("dataset_empty");
  CHECK_THROWS_AS(load_dataset(empty.path()), DataError);
}
