#include <doctest.h>

#include <cmath>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/error.hpp"
#include "lagscope/lbm.hpp"
#include "lagscope/models/train.hpp"
#include "lagscope/synth.hpp"
#include "test_util.hpp"

using namespace lagscope;
using namespace lagscope::ad;

namespace {

// Predicts the input cell (row, col) of every window.
class CellModel final : public models::SequenceModel {
 public:
  CellModel(std::size_t n_vars, std::size_t window, std::size_t row, std::size_t col)
      : SequenceModel(make_config(n_vars, window)), row_(row), col_(col) {}
  Var forward(Tape&, Var windows) const override {
    check_input(windows);
    const std::size_t B = windows.shape()[0];
    return reshape(slice(slice(windows, 1, row_, 1), 2, col_, 1), {B});
  }

 private:
  static models::ModelConfig make_config(std::size_t n_vars, std::size_t window) {
    models::ModelConfig c;
    c.n_vars = n_vars;
    c.window = window;
    return c;
  }
  std::size_t row_, col_;
};

// Ignores its input.
class ConstantModel final : public models::SequenceModel {
 public:
  ConstantModel(std::size_t n_vars, std::size_t window) : SequenceModel(make_config(n_vars, window)) {}
  Var forward(Tape& tape, Var windows) const override {
    check_input(windows);
    return tape.constant(Tensor({windows.shape()[0]}, 0.25));
  }

 private:
  static models::ModelConfig make_config(std::size_t n_vars, std::size_t window) {
    models::ModelConfig c;
    c.n_vars = n_vars;
    c.window = window;
    return c;
  }
};

// x0_t = x1_{t-5} exactly; x1 and x2 are noise.
SupervisedDataset lag5_dataset(std::size_t T, std::size_t window, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(T * 3);
  for (std::size_t t = 0; t < T; ++t) {
    v[t * 3 + 1] = g(rng);
    v[t * 3 + 2] = g(rng);
    v[t * 3] = t >= 5 ? v[(t - 5) * 3 + 1] : 0.0;
  }
  return make_windows(MultivariateSeries(T, 3, std::move(v)), 0, window);
}

}  // namespace

TEST_CASE("lbm config validation and presets") {
  LbmConfig c;
  CHECK_NOTHROW(validate(c));
  CHECK(c.threshold_grid.size() == 19);
  CHECK(c.threshold_grid.front() == doctest::Approx(0.05));
  CHECK(c.threshold_grid.back() == doctest::Approx(0.95));
  const auto lin = lbm_preset("linear");
  CHECK(lin.lambda1 == 0.005);
  CHECK(lin.lambda2 == 0.5);
  CHECK(lin.lambda3 == 0.0001);
  const auto nl = lbm_preset("nonlinear");
  CHECK(nl.lambda1 == 0.0005);
  CHECK(nl.lambda2 == 0.5);
  CHECK(nl.lambda3 == 0.00001);
  CHECK_THROWS_AS(lbm_preset("quadratic"), Error);

  auto bad = c;
  bad.lambda1 = -1.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.threshold_grid = {};
  CHECK_THROWS_AS(validate(bad), Error);
  bad.threshold_grid = {0.5, 0.3};
  CHECK_THROWS_AS(validate(bad), Error);
  bad.threshold_grid = {0.0, 0.5};
  CHECK_THROWS_AS(validate(bad), Error);

  const auto back = lbm_config_from_json(lbm_config_to_json(nl));
  CHECK(lbm_config_to_json(back) == lbm_config_to_json(nl));
}

TEST_CASE("soft mask entries start and stay strictly inside (0, 1)") {
  const auto data = lag5_dataset(200, 10, 1);
  CellModel model(3, 10, 5, 1);
  LbmConfig c;
  c.steps = 1;
  c.learning_rate = 0.0;
  const Tensor init = learn_soft_mask(model, data, c, 3);
  CHECK(init.shape() == Shape{10, 3});
  for (double v : init.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  c.steps = 20;
  c.learning_rate = 0.1;
  for (double v : learn_soft_mask(model, data, c, 3).values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("overwhelming sparsity drives every entry toward 0") {
  const auto data = lag5_dataset(200, 10, 2);
  LbmConfig c;
  c.lambda1 = 1e3;
  c.steps = 200;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Tensor cell = learn_soft_mask(CellModel(3, 10, 5, 1), data, c, seed);
    const Tensor flat = learn_soft_mask(ConstantModel(3, 10), data, c, seed);
    for (double v : cell.values()) CHECK(v < 0.01);
    for (double v : flat.values()) CHECK(v < 0.01);
  }
}

TEST_CASE("constant model: prediction term is flat and sparsity pulls down") {
  const auto data = lag5_dataset(100, 8, 3);
  ConstantModel model(3, 8);
  LbmConfig off;
  off.steps = 1;
  off.learning_rate = 0.0;
  const Tensor init = learn_soft_mask(model, data, off, 7);
  CHECK(masked_abs_error(model, data, init) == masked_abs_error(model, data, Tensor({8, 3}, 1.0)));

  LbmConfig c;
  c.lambda2 = 0.0;
  c.lambda1 = 0.01;
  c.steps = 50;
  const Tensor after = learn_soft_mask(model, data, c, 7);
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i] < init[i]);
}

TEST_CASE("raising lambda1 never adds entries above one half") {
  const auto data = lag5_dataset(100, 12, 4);
  ConstantModel model(3, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (double l1 : {0.0, 1e-4, 1e-3, 0.003, 0.01, 0.03, 0.1, 1.0}) {
      LbmConfig c;
      c.lambda1 = l1;
      c.steps = 40;
      const Tensor soft = learn_soft_mask(model, data, c, seed);
      std::size_t above = 0;
      for (double v : soft.values()) above += v > 0.5;
      INFO("seed " << seed << " lambda1 " << l1);
      CHECK(above <= prev);
      prev = above;
    }
  }
}

TEST_CASE("binarize: constructed sensitivity picks the one relevant cell") {
  const std::size_t W = 10;
  const auto data = lag5_dataset(300, W, 5);
  CellModel model(3, W, lag_to_row(5, W), 1);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor soft = test::random_tensor({W, 3}, rng, 1e-3, 0.1);
    soft.at(lag_to_row(5, W), 1) = 0.9;
    const auto m = binarize_mask(soft, model, data, 1e-4, default_threshold_grid());
    CHECK(m.threshold > 0.1);
    CHECK(m.threshold < 0.9);
    CHECK(m.binary.count() == 1);
    CHECK(m.binary(lag_to_row(5, W), 1));
  }
}

TEST_CASE("binarize: everything below the grid gives an empty mask") {
  const auto data = lag5_dataset(100, 6, 7);
  CellModel model(3, 6, 1, 1);
  const Tensor soft({6, 3}, 0.01);
  const auto m = binarize_mask(soft, model, data, 1e-4, default_threshold_grid());
  CHECK(m.binary.count() == 0);
}

TEST_CASE("binarize: ties go to the largest threshold") {
  const auto data = lag5_dataset(100, 6, 8);
  ConstantModel model(3, 6);
  std::mt19937_64 rng(9);
  const Tensor soft = test::random_tensor({6, 3}, rng, 0.01, 0.99);
  const auto m = binarize_mask(soft, model, data, 0.0, default_threshold_grid());
  CHECK(m.threshold == doctest::Approx(0.95));
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(m.binary(r, c) == (soft.at(r, c) > 0.95));
  CHECK_THROWS_AS(binarize_mask(soft, model, data, 0.0, {}), Error);
}

TEST_CASE("binary mask equals soft > threshold and the model stays frozen") {
  const auto data = lag5_dataset(400, 12, 10);
  const auto split = split_train_test(data, 0.7);
  models::ModelConfig mc;
  mc.kind = models::ModelKind::tcn;
  mc.n_vars = 3;
  mc.window = 12;
  mc.tcn.channels = 4;
  mc.tcn.kernel_size = 3;
  auto model = models::make_model(mc, 2);
  models::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  models::train(*model, split.train, nullptr, tc);
  const std::string before = models::checkpoint_json(*model);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    LbmConfig c = lbm_preset(seed % 2 ? "nonlinear" : "linear");
    c.batch_size = 16;
    c.restarts = 1 + seed % 2;
    const auto m = explain(*model, split.test, c, seed);
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t col = 0; col < 3; ++col) REQUIRE(m.binary(r, col) == (m.soft.at(r, col) > m.threshold));
  }
  CHECK(models::checkpoint_json(*model) == before);
}

TEST_CASE("lbm input errors") {
  const auto data = lag5_dataset(100, 6, 11);
  LbmConfig c;
  CHECK_THROWS_AS(learn_soft_mask(ConstantModel(3, 7), data, c, 0), Error);
  CHECK_THROWS_AS(learn_soft_mask(ConstantModel(2, 6), data, c, 0), Error);
  CHECK_THROWS_AS(learn_soft_mask(ConstantModel(3, 6), data.subset(0, 0), c, 0), Error);
  CHECK_THROWS_AS(binarize_mask(Tensor({5, 3}, 0.5), ConstantModel(3, 6), data, 0.0, default_threshold_grid()),
                  Error);
}

TEST_CASE("extract_dependencies") {
  LagMask empty(300, 4);
  for (const auto& d : extract_dependencies(empty, 0)) {
    CHECK_FALSE(d.present);
    CHECK(d.lags.empty());
  }

  LagMask one(300, 4);
  one.set(295, 2);
  const auto deps = extract_dependencies(one, 1);
  REQUIRE(deps.size() == 4);
  CHECK(deps[2].present);
  CHECK(deps[2].target == 1);
  CHECK(deps[2].lags == std::vector<std::size_t>{5});

  LagMask full(7, 2);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 2; ++c) full.set(r, c);
  for (const auto& d : extract_dependencies(full, 0)) {
    CHECK(d.present);
    CHECK(d.lags == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
  }
}

TEST_CASE("extraction inverts ground_truth_mask") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto g = sample_linear_system(seed);
    const std::size_t window = 1 + seed % 299;
    for (std::size_t k = 0; k < g.n_vars; ++k) {
      const auto gt = ground_truth_mask(g, k, window);
      const auto deps = extract_dependencies(gt.mask, k);
      std::vector<std::pair<std::size_t, std::size_t>> got, want;
      for (const auto& d : deps)
        for (std::size_t lag : d.lags) got.emplace_back(d.source, lag);
      for (const auto& e : g.edges_into(k))
        if (e.lag <= window) want.emplace_back(e.source, e.lag);
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      REQUIRE(got == want);
      REQUIRE(ground_truth_mask(g, k, window).mask == gt.mask);
    }
  }
}

TEST_CASE("mask CSV exports") {
  test::TempDir dir("mask");
  Tensor soft({2, 3}, {0.1, 0.25, 0.999999, 1e-7, 0.5, 0.1234567});
  save_soft_mask_csv(soft, dir / "soft.csv");
  CHECK(test::read_file(dir / "soft.csv") == "0.100000,0.250000,0.999999\n0.000000,0.500000,0.123457\n");
  LagMask b(2, 3);
  b.set(0, 2);
  b.set(1, 0);
  save_binary_mask_csv(b, dir / "bin.csv");
  CHECK(test::read_file(dir / "bin.csv") == "0,0,1\n1,0,0\n");
}
