#include <doctest.h>

#include <cmath>
#include <set>

#include "lagscope/synth.hpp"
#include "test_util.hpp"

using namespace lagscope;

namespace {

GroundTruthGraph single_edge(double alpha, std::size_t lag) {
  GroundTruthGraph g;
  g.n_vars = 2;
  g.noise_scale = {1.0, 1.0};
  g.edges = {{0, 1, alpha, lag}};
  return g;
}

// Re-evaluates every linear equation on the emitted series.
double max_linear_residual(const GroundTruthGraph& g, const MultivariateSeries& s) {
  const std::size_t start = g.max_lag();
  double worst = 0.0;
  for (std::size_t t = start; t < s.length(); ++t) {
    for (std::size_t i = 0; i < g.n_vars; ++i) {
      double f = 0.0;
      for (const auto& e : g.edges_into(i)) f += e.alpha * s(t - e.lag, e.source);
      worst = std::max(worst, std::fabs(s(t, i) - f));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("sample_linear_system stays inside the sampling ranges") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = sample_linear_system(seed);
    REQUIRE(g.n_vars >= 5);
    REQUIRE(g.n_vars <= 15);
    REQUIRE(g.kind == GraphKind::linear);
    std::vector<std::size_t> per_target(g.n_vars, 0);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : g.edges) {
      REQUIRE(std::fabs(e.alpha) <= 0.4);
      REQUIRE(e.lag >= 1);
      REQUIRE(e.lag <= 250);
      REQUIRE(e.source < g.n_vars);
      REQUIRE(seen.insert({e.target, e.source}).second);
      ++per_target[e.target];
    }
    for (std::size_t n : per_target) REQUIRE(n <= g.n_vars);
    CHECK_NOTHROW(g.validate());
  }
}

TEST_CASE("sample_linear_system is deterministic") {
  CHECK(sample_linear_system(42) == sample_linear_system(42));
  CHECK(graph_to_json(sample_linear_system(42)).dump() == graph_to_json(sample_linear_system(42)).dump());
}

TEST_CASE("graph validation") {
  auto g = single_edge(0.5, 5);
  CHECK_THROWS_AS(g.validate(), Error);
  g.kind = GraphKind::linear_custom;
  CHECK_NOTHROW(g.validate());
  g.edges[0].lag = 0;
  CHECK_THROWS_AS(g.validate(), Error);
  g.edges[0].lag = 300;
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("graph JSON round trip") {
  test::TempDir dir("graph");
  const auto g = sample_linear_system(9);
  save_graph(g, dir / "g.json");
  CHECK(load_graph(dir / "g.json") == g);
  const auto nl = nonlinear_ground_truth();
  CHECK(graph_from_json(graph_to_json(nl)) == nl);
}

TEST_CASE("zero-edge system is standard normal noise") {
  GroundTruthGraph g;
  g.n_vars = 3;
  g.noise_scale = {1, 1, 1};
  const auto s = simulate_linear(g, 100000, 4);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0.0;
    for (double v : s.column(j)) m += v;
    CHECK(std::fabs(m / 100000.0) < 0.05);
  }
}

TEST_CASE("single edge: lagged cross-covariance equals alpha") {
  const auto s = simulate_linear(single_edge(0.4, 5), 100000, 8);
  const auto x0 = s.column(0), x1 = s.column(1);
  double m0 = 0, m1 = 0;
  const std::size_t n = x0.size() - 5;
  for (std::size_t t = 5; t < x0.size(); ++t) {
    m0 += x0[t];
    m1 += x1[t - 5];
  }
  m0 /= static_cast<double>(n);
  m1 /= static_cast<double>(n);
  double c = 0;
  for (std::size_t t = 5; t < x0.size(); ++t) c += (x0[t] - m0) * (x1[t - 5] - m1);
  CHECK(c / static_cast<double>(n) == doctest::Approx(0.4).epsilon(0.05 / 0.4));
}

TEST_CASE("deterministic recursion with prescribed noise") {
  SimulationOptions opt;
  opt.noise = [](std::size_t var, std::size_t) { return var == 1 ? 1.0 : 0.0; };
  const auto s = simulate_linear(single_edge(0.4, 5), 50, 0, opt);
  for (std::size_t t = 0; t < 50; ++t) CHECK(s(t, 1) == 1.0);
  for (std::size_t t = 5; t < 50; ++t) CHECK(s(t, 0) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("simulate_linear errors") {
  CHECK_THROWS_AS(simulate_linear(single_edge(0.4, 5), 5, 0), Error);
  auto nl = nonlinear_ground_truth();
  CHECK_THROWS_AS(simulate_linear(nl, 1000, 0), Error);
  auto unstable = single_edge(0.4, 1);
  unstable.kind = GraphKind::linear_custom;
  unstable.edges = {{0, 0, 3.0, 1}};
  CHECK_THROWS_AS(simulate_linear(unstable, 1000, 0), DivergenceError);
}

TEST_CASE("generate_linear_case redraws unstable systems deterministically") {
  const auto a = generate_linear_case(3, 2000);
  const auto b = generate_linear_case(3, 2000);
  CHECK(a.graph == b.graph);
  CHECK(std::equal(a.series.values().begin(), a.series.values().end(), b.series.values().begin()));
  CHECK(a.attempts >= 1);
  for (double v : a.series.values()) REQUIRE(std::fabs(v) <= 1e6);
}

TEST_CASE("noiseless linear simulations satisfy their equations") {
  SimulationOptions opt;
  opt.recursion_noise = false;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto c = generate_linear_case(seed, 1500, opt);
    CHECK(max_linear_residual(c.graph, c.series) <= 1e-12);
  }
}

TEST_CASE("nonlinear system equations hold exactly without noise") {
  SimulationOptions opt;
  opt.recursion_noise = false;
  const auto c = simulate_nonlinear(2000, 5, opt);
  const auto& s = c.series;
  for (std::size_t t = 270; t < s.length(); ++t) {
    const double td = static_cast<double>(t);
    CHECK(std::fabs(s(t, 0) - std::sin(0.5 * td) * std::cos(2.0 * td)) <= 1e-12);
    CHECK(std::fabs(s(t, 1) - (std::sin(2.0 * td) + std::cos(0.5 * td))) <= 1e-12);
    CHECK(std::fabs(s(t, 2) - (s(t - 10, 0) * s(t - 100, 1) + s(t - 70, 0) * s(t - 40, 1))) <= 1e-12);
    CHECK(std::fabs(s(t, 3) - (s(t - 150, 2) * s(t - 20, 1) - 5.0 * std::sin(s(t - 100, 0)))) <= 1e-12);
    CHECK(std::fabs(s(t, 4) - s(t - 80, 3) / (20.0 + s(t - 40, 2))) <= 1e-12);
    CHECK(std::fabs(s(t, 5) - (s(t - 10, 0) * s(t - 20, 1) + s(t - 110, 2) * s(t - 120, 4) +
                               s(t - 210, 4) * s(t - 270, 5))) <= 1e-12);
  }
}

TEST_CASE("nonlinear ground truth") {
  const auto g = nonlinear_ground_truth();
  CHECK(g.edges.size() == 15);
  const auto x4 = g.edges_into(4);
  REQUIRE(x4.size() == 2);
  CHECK(x4[0].source == 3);
  CHECK(x4[0].lag == 80);
  CHECK(x4[1].source == 2);
  CHECK(x4[1].lag == 40);
  CHECK(g.edges_into(2).size() == 4);
  CHECK(g.edges_into(5).size() == 6);
  CHECK(g.noise_scale == std::vector<double>{1, 1, 1, 0.1, 0.1, 0.1});
  CHECK_THROWS_AS(simulate_nonlinear(270, 0), Error);
}

TEST_CASE("simulations are bit-identical per seed") {
  const auto a = simulate_nonlinear(3000, 3);
  const auto b = simulate_nonlinear(3000, 3);
  CHECK(std::equal(a.series.values().begin(), a.series.values().end(), b.series.values().begin()));
  const auto c = simulate_nonlinear(3000, 4);
  CHECK_FALSE(std::equal(a.series.values().begin(), a.series.values().end(), c.series.values().begin()));
}

TEST_CASE("ground_truth_mask") {
  GroundTruthGraph none;
  none.n_vars = 3;
  none.noise_scale = {1, 1, 1};
  CHECK(ground_truth_mask(none, 1, 10).mask.count() == 0);

  const auto m = ground_truth_mask(single_edge(0.4, 5), 0, 10);
  CHECK(m.mask.count() == 1);
  CHECK(m.mask(5, 1));

  auto far = single_edge(0.4, 299);
  far.edges.push_back({0, 0, 0.1, 300});
  const auto b = ground_truth_mask(far, 0, 300);
  CHECK(b.mask(0, 0));
  CHECK(b.mask(1, 1));
  CHECK(b.unreachable.empty());

  const auto cut = ground_truth_mask(single_edge(0.4, 20), 0, 10);
  CHECK(cut.mask.count() == 0);
  REQUIRE(cut.unreachable.size() == 1);
  CHECK(cut.unreachable[0].lag == 20);
}
