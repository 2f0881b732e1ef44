#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "brakenet/data.hpp"
#include "brakenet/ops.hpp"
#include "brakenet/synthetic.hpp"
#include "brakenet/tensor.hpp"

namespace brakenet::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Norm-wise relative error between the backward() gradient of f() and central
// differences with step h, over every element of every input.
inline double gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                        double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  backward(f());
  std::vector<double> analytic, numeric;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.insert(analytic.end(), t.grad().begin(), t.grad().end());
    } else {
      analytic.insert(analytic.end(), t.size(), 0.0);
    }
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double old = d[i];
      NoGradGuard guard;
      d[i] = old + h;
      const double fp = f().item();
      d[i] = old - h;
      const double fm = f().item();
      d[i] = old;
      numeric.push_back((fp - fm) / (2.0 * h));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / scale;
}

// Scalar probe sum(out * r) with a fixed random r, so every output element
// gets a distinct weight.
inline std::function<Tensor()> probe(std::function<Tensor()> op, std::mt19937_64& rng) {
  Tensor out;
  {
    NoGradGuard guard;
    out = op();
  }
  Tensor r = random_tensor(out.shape(), rng, false);
  return [op = std::move(op), r] { return sum(mul(op(), r)); };
}

struct OpCheck {
  std::string op;
  std::size_t cases = 0;
  double worst = 0.0;
};

// Finite-difference checks on `cases` random small shapes per op.
inline std::vector<OpCheck> check_all_ops(std::size_t cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OpCheck> results;
  auto run = [&](const std::string& name, const std::function<double()>& one_case) {
    OpCheck c{name, cases, 0.0};
    for (std::size_t i = 0; i < cases; ++i) c.worst = std::max(c.worst, one_case());
    results.push_back(c);
  };

  run("conv1d", [&] {
    const std::size_t n = pick(rng, 0, 3), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 5), pad = pick(rng, 0, 2), stride = pick(rng, 1, 2);
    const std::size_t len = std::max<std::size_t>(k, pick(rng, 3, 10));
    Shape xs = n == 0 ? Shape{ci, len} : Shape{n, ci, len};
    Tensor x = random_tensor(xs, rng), w = random_tensor({co, ci, k}, rng),
           b = random_tensor({co}, rng);
    return gradcheck(probe([=] { return conv1d(x, w, b, stride, pad); }, rng), {x, w, b});
  });

  run("conv2d", [&] {
    const std::size_t n = pick(rng, 0, 2), ci = pick(rng, 1, 2), co = pick(rng, 1, 2);
    const std::size_t k = pick(rng, 1, 3), pad = pick(rng, 0, 1), stride = pick(rng, 1, 2);
    const std::size_t h = std::max<std::size_t>(k, pick(rng, 3, 6));
    const std::size_t w_ = std::max<std::size_t>(k, pick(rng, 3, 6));
    Shape xs = n == 0 ? Shape{ci, h, w_} : Shape{n, ci, h, w_};
    Tensor x = random_tensor(xs, rng), w = random_tensor({co, ci, k, k}, rng),
           b = random_tensor({co}, rng);
    return gradcheck(probe([=] { return conv2d(x, w, b, stride, pad); }, rng), {x, w, b});
  });

  run("batchnorm", [&] {
    const std::size_t n = pick(rng, 2, 4), c = pick(rng, 1, 3);
    Shape xs = pick(rng, 0, 1) ? Shape{n, c, pick(rng, 2, 5)}
                               : Shape{n, c, pick(rng, 2, 3), pick(rng, 2, 3)};
    auto state = std::make_shared<BatchNormState>(c);
    state->gamma = random_tensor({c}, rng, true, 0.5, 1.5);
    state->beta = random_tensor({c}, rng);
    const bool inference = pick(rng, 0, 2) == 0;
    if (inference) {
      state->mode = Mode::inference;
      for (auto& m : state->running_mean) m = std::uniform_real_distribution<>(-1, 1)(rng);
      for (auto& v : state->running_var) v = std::uniform_real_distribution<>(0.5, 2)(rng);
    }
    Tensor x = random_tensor(xs, rng);
    return gradcheck(probe([=] { return batchnorm(x, *state); }, rng),
                     {x, state->gamma, state->beta});
  });

  run("relu", [&] {
    Tensor x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 5), pick(rng, 1, 6)}, rng);
    return gradcheck(probe([=] { return relu(x); }, rng), {x});
  });

  run("maxpool", [&] {
    const std::size_t k = pick(rng, 1, 3), s = pick(rng, 1, 2);
    if (pick(rng, 0, 1)) {
      Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), k + pick(rng, 0, 6)}, rng);
      return gradcheck(probe([=] { return maxpool1d(x, k, s); }, rng), {x});
    }
    Tensor x = random_tensor({pick(rng, 1, 2), pick(rng, 1, 2), k + pick(rng, 0, 4),
                              k + pick(rng, 0, 4)},
                             rng);
    return gradcheck(probe([=] { return maxpool2d(x, k, s); }, rng), {x});
  });

  run("linear", [&] {
    const std::size_t n = pick(rng, 1, 4), f = pick(rng, 1, 8), o = pick(rng, 1, 3);
    Tensor x = random_tensor({n, f}, rng), w = random_tensor({o, f}, rng),
           b = random_tensor({o}, rng);
    return gradcheck(probe([=] { return linear(x, w, b); }, rng), {x, w, b});
  });

  run("l1_loss", [&] {
    const std::size_t n = pick(rng, 1, 6);
    Tensor p = random_tensor({n, 1}, rng), t = random_tensor({n, 1}, rng);
    return gradcheck([=] { return l1_loss(p, t); }, {p, t});
  });

  run("residual add", [&] {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 5)};
    Tensor a = random_tensor(s, rng), b = random_tensor(s, rng);
    return gradcheck(probe([=] { return relu(add(a, b)); }, rng), {a, b});
  });

  return results;
}

// In-memory generated sessions cycling through surfaces and the three speeds.
inline std::vector<LoadedSession> synthetic_sessions(std::size_t n, std::uint64_t seed,
                                                     double duration_s = 1.5) {
  const double speeds[] = {kSpeed15Mph, kSpeed20Mph, kSpeed25Mph};
  std::vector<LoadedSession> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Surface surface = i % 2 == 0 ? Surface::asphalt : Surface::concrete;
    GenConfig cfg = make_gen_config(surface, speeds[(i / 2) % 3], seed * 1000 + i);
    cfg.duration_s = duration_s;
    GeneratedSession g = gen_session(cfg);
    LoadedSession s;
    s.record.id = "session_" + std::to_string(i + 1);
    s.record.csv_file = s.record.id + ".csv";
    s.record.label_ft = g.label_ft;
    s.record.valid_start = g.valid_start;
    s.record.valid_stop = g.valid_stop;
    s.record.speed_mps = cfg.speed_mps;
    s.record.surface = surface;
    s.series = std::move(g.series);
    out.push_back(std::move(s));
  }
  return out;
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("brakenet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

}  // namespace brakenet::testing
