#include <doctest.h>

#include <cstring>
#include <random>
#include <string>

#include "brakenet/checkpoint.hpp"
#include "brakenet/errors.hpp"
#include "brakenet/models.hpp"
#include "brakenet/training.hpp"
#include "support.hpp"

using namespace brakenet;
using brakenet::testing::gradcheck;
using brakenet::testing::random_tensor;
using brakenet::testing::TempDir;

namespace {

Tensor find(const Model& m, const std::string& name) {
  for (const auto& p : m.named_parameters()) {
    if (p.name == name) return p.tensor;
  }
  FAIL("no parameter " << name);
  return {};
}

ModelSpec mini_spec(std::size_t length) {
  ModelSpec spec;
  spec.kind = ModelKind::cnn1d;
  spec.input_dims = {length};
  spec.blocks = {{{15, 7, 7, 3, 2}, {7, 3, 3, 1, 4}}};
  spec.init_seed = 5;
  return spec;
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("baseline shapes") {
  Model m = build_baseline(6288, 1);
  CHECK(find(m, "head.weight").shape() == Shape{1, 18864});
  CHECK(build_baseline(100, 1).parameter_count() == 301);
  CHECK(m.named_parameters().size() == 2);

  Model z = build_baseline(10, 2);
  Tensor w = find(z, "head.weight");
  for (auto& v : w.data()) v = 0.0;
  find(z, "head.bias")[0] = 4.25;
  std::mt19937_64 rng(1);
  Tensor out = z.forward(random_tensor({3, 3, 10}, rng, false));
  CHECK(out.shape() == Shape{3, 1});
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == 4.25);
}

TEST_CASE("cnn1d shape chain at 6288") {
  Model m = build_cnn1d(6288, 1);
  const ShapeChain chain = shape_chain(m.spec());
  CHECK(chain.block1_pooled == Shape{16, 3143});
  CHECK(chain.block2_pooled == Shape{32, 1571});
  CHECK(chain.head_width == 50272);
  CHECK(m.head_width() == 50272);
  CHECK(find(m, "block1.conv1.weight").shape() == Shape{16, 16, 15});
  CHECK(find(m, "block1.conv2.weight").shape() == Shape{16, 16, 7});
  CHECK(find(m, "block2.conv1.weight").shape() == Shape{32, 32, 7});
  CHECK(find(m, "block2.conv2.weight").shape() == Shape{32, 32, 3});
  CHECK(find(m, "reshape1.weight").shape() == Shape{16, 3, 1});
  CHECK(find(m, "reshape2.weight").shape() == Shape{32, 16, 1});
  CHECK(find(m, "block1.bn1.gamma")[0] == 1.0);
  CHECK(find(m, "block1.conv1.bias")[0] == 0.0);

  std::mt19937_64 rng(2);
  Tensor out = m.forward(random_tensor({4, 3, 6288}, rng, false));
  CHECK(out.shape() == Shape{4, 1});
}

TEST_CASE("cnn2d shape chain at 100x100") {
  Model m = build_cnn2d(100, 100, 1);
  const ShapeChain chain = shape_chain(m.spec());
  CHECK(chain.block1_pooled == Shape{16, 49, 49});
  CHECK(chain.block2_pooled == Shape{32, 24, 24});
  CHECK(chain.head_width == 18432);
  CHECK(find(m, "block1.conv1.weight").shape() == Shape{16, 16, 15, 15});
  CHECK(find(m, "block2.conv2.weight").shape() == Shape{32, 32, 3, 3});

  std::mt19937_64 rng(3);
  Tensor out = m.forward(random_tensor({2, 3, 100, 100}, rng, false));
  CHECK(out.shape() == Shape{2, 1});

  // The two CNNs differ only in kernel dimensionality and head width.
  Model one_d = build_cnn1d(6288, 1);
  std::size_t conv1d_params = 0, conv2d_params = 0;
  for (const auto& p : one_d.named_parameters()) {
    if (p.name.rfind("head", 0) != 0 && p.tensor.rank() == 3) {
      conv1d_params += p.tensor.size() / p.tensor.dim(2);
    }
  }
  for (const auto& p : m.named_parameters()) {
    if (p.name.rfind("head", 0) != 0 && p.tensor.rank() == 4) {
      conv2d_params += p.tensor.size() / (p.tensor.dim(2) * p.tensor.dim(3));
    }
  }
  CHECK(conv1d_params == conv2d_params);
}

TEST_CASE("every residual conv preserves length") {
  for (const auto& p : kDefaultBlocks) {
    CHECK(p.padding1 * 2 + 1 == p.kernel1);
    CHECK(p.padding2 * 2 + 1 == p.kernel2);
  }
  ModelSpec bad = mini_spec(32);
  bad.blocks[0].padding1 = 6;
  CHECK_THROWS_AS(Model{bad}, ConfigError);
}

TEST_CASE("input too short for two pools") {
  CHECK_THROWS_AS(build_cnn1d(4, 0), DimensionError);
  CHECK_NOTHROW(build_cnn1d(7, 0));
}

TEST_CASE("forward names the offending stage") {
  Model m = build_cnn1d(64, 0);
  try {
    m.forward(Tensor({2, 3, 65}));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stage input") != std::string::npos);
    CHECK(msg.find("64") != std::string::npos);
  }
  CHECK_THROWS_AS(m.forward(Tensor({2, 4, 64})), DimensionError);
}

TEST_CASE("forward is deterministic and finite") {
  Model m = build_cnn1d(256, 9);
  m.set_mode(Mode::inference);
  Tensor zeros({2, 3, 256});
  Tensor a = m.forward(zeros), b = m.forward(zeros);
  CHECK(std::isfinite(a[0]));
  CHECK(a[0] == a[1]);
  CHECK(bitwise_equal(a.data(), b.data()));

  std::mt19937_64 rng(4);
  Tensor x = random_tensor({1, 3, 256}, rng, false);
  std::vector<double> twice(x.data().begin(), x.data().end());
  twice.insert(twice.end(), x.data().begin(), x.data().end());
  Tensor dup({2, 3, 256}, twice);
  Tensor y = m.forward(dup);
  CHECK(y[0] == y[1]);

  // Nudge one input element.
  const double before = m.forward(x)[0];
  x[100] += 0.5;
  CHECK(m.forward(x)[0] != before);

  // Training mode works on batches and is deterministic too.
  m.set_mode(Mode::training);
  Model m2 = build_cnn1d(256, 9);
  CHECK(bitwise_equal(m.forward(dup).data(), m2.forward(dup).data()));
}

TEST_CASE("seed fixes initialization") {
  CHECK(build_cnn1d(128, 3).state_hash() == build_cnn1d(128, 3).state_hash());
  CHECK(build_cnn1d(128, 3).state_hash() != build_cnn1d(128, 4).state_hash());
  Model m = build_baseline(50, 1);
  const double bound = 1.0 / std::sqrt(150.0);
  for (double v : find(m, "head.weight").data()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("end-to-end gradient of a miniature network") {
  Model m(mini_spec(32));
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({3, 3, 32}, rng);
  Tensor target = random_tensor({3, 1}, rng, false, 2, 3);
  std::vector<Tensor> inputs = m.parameters();
  inputs.push_back(x);
  const double err = gradcheck([&] { return l1_loss(m.forward(x), target); }, inputs);
  CHECK(err < 1e-4);

  ModelSpec two_d;
  two_d.kind = ModelKind::cnn2d;
  two_d.input_dims = {8, 8};
  two_d.blocks = {{{3, 1, 3, 1, 2}, {3, 1, 1, 0, 3}}};
  Model m2(two_d);
  Tensor x2 = random_tensor({2, 3, 8, 8}, rng);
  Tensor t2 = random_tensor({2, 1}, rng, false, 2, 3);
  std::vector<Tensor> in2 = m2.parameters();
  in2.push_back(x2);
  CHECK(gradcheck([&] { return l1_loss(m2.forward(x2), t2); }, in2) < 1e-4);
}

TEST_CASE("clone is deep") {
  Model m = build_cnn1d(64, 1);
  Model c = m.clone();
  CHECK(c.state_hash() == m.state_hash());
  find(m, "head.bias")[0] += 1.0;
  m.bn_states()[0]->running_mean[0] = 3.0;
  CHECK(c.state_hash() != m.state_hash());
  CHECK(c.bn_states()[0]->running_mean[0] == 0.0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  TempDir dir("ckpt");
  Model m = build_cnn1d(128, 7);
  // Move running stats and parameters away from their initial values.
  std::mt19937_64 rng(8);
  m.forward(random_tensor({4, 3, 128}, rng, false));
  find(m, "block2.bn2.beta")[3] = 0.1 + 1e-17;
  m.set_mode(Mode::inference);
  save_checkpoint(dir / "m.ckpt", m, {{"note", "hello"}, {"val_l1", 1.25}});

  Checkpoint ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.model.spec() == m.spec());
  CHECK(ck.model.state_hash() == m.state_hash());
  CHECK(ck.metadata["note"] == "hello");
  CHECK(ck.metadata["val_l1"].get<double>() == 1.25);
  const auto a = m.named_parameters();
  const auto b = ck.model.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(bitwise_equal(a[i].tensor.data(), b[i].tensor.data()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ck.model.bn_states()[i]->running_var == m.bn_states()[i]->running_var);
  }

  Tensor w = random_tensor({3, 128}, rng, false);
  CHECK(predict(ck.model, w) == predict(m, w));

  // Second save of the loaded model reproduces the same bytes.
  save_checkpoint(dir / "again.ckpt", ck.model, ck.metadata);
  CHECK(brakenet::testing::slurp(dir / "m.ckpt") == brakenet::testing::slurp(dir / "again.ckpt"));

  Model base = build_baseline(100, 1);
  save_checkpoint(dir / "b.ckpt", base);
  CHECK(load_checkpoint(dir / "b.ckpt").model.state_hash() == base.state_hash());

  Model two = build_cnn2d(16, 16, 2);
  save_checkpoint(dir / "c.ckpt", two);
  CHECK(load_checkpoint(dir / "c.ckpt").model.state_hash() == two.state_hash());
}

TEST_CASE("damaged checkpoints are rejected") {
  TempDir dir("ckpt_bad");
  save_checkpoint(dir / "m.ckpt", build_baseline(100, 1));
  std::string bytes = brakenet::testing::slurp(dir / "m.ckpt");

  brakenet::testing::spit(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), DataError);

  std::string magic = bytes;
  magic[0] = 'X';
  brakenet::testing::spit(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), DataError);

  CHECK_THROWS_AS(load_checkpoint(dir / "none.ckpt"), DataError);
}
