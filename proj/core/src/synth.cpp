#include "lagscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace lagscope {

std::size_t GroundTruthGraph::max_lag() const {
  std::size_t m = 0;
  for (const auto& e : edges) m = std::max(m, e.lag);
  return m;
}

std::vector<GroundTruthEdge> GroundTruthGraph::edges_into(std::size_t target) const {
  std::vector<GroundTruthEdge> out;
  std::copy_if(edges.begin(), edges.end(), std::back_inserter(out),
               [target](const GroundTruthEdge& e) { return e.target == target; });
  return out;
}

std::string to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::linear: return "linear";
    case GraphKind::linear_custom: return "linear-custom";
    case GraphKind::nonlinear_fixed: return "nonlinear-fixed";
  }
  return "linear";
}

GraphKind parse_graph_kind(std::string_view name) {
  if (name == "linear") return GraphKind::linear;
  if (name == "linear-custom") return GraphKind::linear_custom;
  if (name == "nonlinear-fixed") return GraphKind::nonlinear_fixed;
  throw Error("graph: unknown kind '" + std::string(name) + "'");
}

void GroundTruthGraph::validate() const {
  if (n_vars == 0) throw Error("graph: n_vars must be >= 1");
  if (noise_scale.size() != n_vars) throw Error("graph: noise_scale needs one entry per variable");
  for (double b : noise_scale) {
    if (!(b >= 0.0)) throw Error("graph: noise scale must be >= 0");
  }
  for (const auto& e : edges) {
    if (e.target >= n_vars || e.source >= n_vars) throw Error("graph: edge index out of range");
    if (e.lag < 1 || e.lag >= kMaxLagExclusive) {
      throw Error("graph: lag " + std::to_string(e.lag) + " outside [1, 300)");
    }
    if (kind == GraphKind::linear && std::fabs(e.alpha) > kLinearAlphaBound) {
      throw Error("graph: linear coefficient exceeds 0.4 in magnitude");
    }
  }
}

nlohmann::json graph_to_json(const GroundTruthGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges) {
    edges.push_back({{"target", e.target}, {"source", e.source}, {"alpha", e.alpha}, {"lag", e.lag}});
  }
  nlohmann::json doc;
  doc["n_vars"] = graph.n_vars;
  doc["edges"] = std::move(edges);
  doc["noise_scale"] = graph.noise_scale;
  doc["kind"] = to_string(graph.kind);
  doc["seed"] = graph.seed ? nlohmann::json(*graph.seed) : nlohmann::json(nullptr);
  return doc;
}

GroundTruthGraph graph_from_json(const nlohmann::json& doc) {
  GroundTruthGraph g;
  try {
    g.n_vars = doc.at("n_vars").get<std::size_t>();
    for (const auto& e : doc.at("edges")) {
      g.edges.push_back({e.at("target").get<std::size_t>(), e.at("source").get<std::size_t>(),
                         e.at("alpha").get<double>(), e.at("lag").get<std::size_t>()});
    }
    g.noise_scale = doc.at("noise_scale").get<std::vector<double>>();
    g.kind = parse_graph_kind(doc.at("kind").get<std::string>());
    if (doc.contains("seed") && !doc["seed"].is_null()) g.seed = doc["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("graph: malformed JSON: ") + e.what());
  }
  g.validate();
  return g;
}

void save_graph(const GroundTruthGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_graph: cannot write " + path.string());
  out << graph_to_json(graph).dump(2) << '\n';
}

GroundTruthGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_graph: cannot open " + path.string());
  try {
    return graph_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("load_graph: " + std::string(e.what()));
  }
}

GroundTruthGraph sample_linear_system(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GroundTruthGraph g;
  g.kind = GraphKind::linear;
  g.seed = seed;
  g.n_vars = std::uniform_int_distribution<std::size_t>(5, 15)(rng);
  g.noise_scale.assign(g.n_vars, 1.0);

  std::uniform_int_distribution<std::size_t> index(0, g.n_vars - 1);
  std::uniform_real_distribution<double> alpha(-kLinearAlphaBound, kLinearAlphaBound);
  std::uniform_int_distribution<std::size_t> lag(1, kLinearLagMax);
  for (std::size_t i = 0; i < g.n_vars; ++i) {
    const std::size_t draws = std::uniform_int_distribution<std::size_t>(0, g.n_vars)(rng);
    std::vector<std::size_t> regressors;
    for (std::size_t l = 0; l < draws; ++l) {
      const std::size_t k = index(rng);
      if (std::find(regressors.begin(), regressors.end(), k) == regressors.end()) regressors.push_back(k);
    }
    for (std::size_t j : regressors) {
      const double a = alpha(rng);
      g.edges.push_back({i, j, a, lag(rng)});
    }
  }
  return g;
}

namespace {

double draw_noise(const SimulationOptions& options, std::normal_distribution<double>& normal,
                  std::mt19937_64& rng, std::size_t var, std::size_t t, bool bootstrap) {
  const double eps = options.noise ? options.noise(var, t) : normal(rng);
  return (bootstrap || options.recursion_noise) ? eps : 0.0;
}

void check_divergence(double v, const SimulationOptions& options, std::size_t var, std::size_t t) {
  if (!std::isfinite(v) || std::fabs(v) > options.divergence_limit) {
    throw DivergenceError("simulation diverged at t=" + std::to_string(t) + ", variable " + std::to_string(var));
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t attempt) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (attempt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

MultivariateSeries simulate_linear(const GroundTruthGraph& graph, std::size_t length, std::uint64_t seed,
                                   const SimulationOptions& options) {
  graph.validate();
  if (graph.kind == GraphKind::nonlinear_fixed) throw Error("simulate_linear: graph is not linear");
  const std::size_t max_lag = graph.max_lag();
  if (length <= max_lag) {
    throw Error("simulate_linear: length " + std::to_string(length) + " must exceed max lag " +
                std::to_string(max_lag));
  }
  const std::size_t N = graph.n_vars;
  std::vector<std::vector<GroundTruthEdge>> incoming(N);
  for (const auto& e : graph.edges) incoming[e.target].push_back(e);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(length * N);
  for (std::size_t t = 0; t < length; ++t) {
    const bool bootstrap = t < max_lag;
    for (std::size_t i = 0; i < N; ++i) {
      const double eps = draw_noise(options, normal, rng, i, t, bootstrap);
      double v = graph.noise_scale[i] * eps;
      if (!bootstrap) {
        double s = 0.0;
        for (const auto& e : incoming[i]) s += e.alpha * x[(t - e.lag) * N + e.source];
        v = s + v;
      }
      check_divergence(v, options, i, t);
      x[t * N + i] = v;
    }
  }
  return MultivariateSeries(length, N, std::move(x));
}

SyntheticCase generate_linear_case(std::uint64_t seed, std::size_t length, const SimulationOptions& options,
                                   std::size_t max_attempts) {
  if (length <= kLinearLagMax) {
    throw Error("generate_linear_case: length must exceed " + std::to_string(kLinearLagMax));
  }
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : derive_seed(seed, attempt);
    GroundTruthGraph graph = sample_linear_system(s);
    if (length <= graph.max_lag()) continue;
    try {
      MultivariateSeries series = simulate_linear(graph, length, s, options);
      return {std::move(graph), std::move(series), attempt + 1};
    } catch (const DivergenceError&) {
      // unstable draw: resample
    }
  }
  throw NumericalError("generate_linear_case: no stable system after " + std::to_string(max_attempts) +
                       " attempts");
}

GroundTruthGraph nonlinear_ground_truth() {
  GroundTruthGraph g;
  g.kind = GraphKind::nonlinear_fixed;
  g.n_vars = 6;
  g.noise_scale = {1.0, 1.0, 1.0, 0.1, 0.1, 0.1};
  // alpha marks a nonzero dependency; nonlinear terms have no single coefficient.
  g.edges = {
      {2, 0, 1.0, 10},  {2, 1, 1.0, 100}, {2, 0, 1.0, 70},  {2, 1, 1.0, 40},  {3, 2, 1.0, 150},
      {3, 1, 1.0, 20},  {3, 0, -5.0, 100}, {4, 3, 1.0, 80},  {4, 2, 1.0, 40},  {5, 0, 1.0, 10},
      {5, 1, 1.0, 20},  {5, 2, 1.0, 110}, {5, 4, 1.0, 120}, {5, 4, 1.0, 210}, {5, 5, 1.0, 270},
  };
  return g;
}

SyntheticCase simulate_nonlinear(std::size_t length, std::uint64_t seed, const SimulationOptions& options) {
  constexpr std::size_t kLargestLag = 270;
  if (length <= kLargestLag) {
    throw Error("simulate_nonlinear: length must exceed " + std::to_string(kLargestLag));
  }
  GroundTruthGraph graph = nonlinear_ground_truth();
  graph.seed = seed;
  constexpr std::size_t N = 6;
  // First t at which each equation has all its lagged inputs.
  constexpr std::size_t kStart[N] = {0, 0, 100, 150, 80, 270};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(length * N);
  auto at = [&](std::size_t var, std::size_t t) { return x[t * N + var]; };
  for (std::size_t t = 0; t < length; ++t) {
    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < N; ++i) {
      const bool bootstrap = t < kStart[i];
      const double noise = graph.noise_scale[i] * draw_noise(options, normal, rng, i, t, bootstrap);
      double v = noise;
      if (!bootstrap) {
        double f = 0.0;
        switch (i) {
          case 0: f = std::sin(0.5 * td) * std::cos(2.0 * td); break;
          case 1: f = std::sin(2.0 * td) + std::cos(0.5 * td); break;
          case 2: f = at(0, t - 10) * at(1, t - 100) + at(0, t - 70) * at(1, t - 40); break;
          case 3: f = at(2, t - 150) * at(1, t - 20) - 5.0 * std::sin(at(0, t - 100)); break;
          case 4: f = at(3, t - 80) / (20.0 + at(2, t - 40)); break;
          case 5:
            f = at(0, t - 10) * at(1, t - 20) + at(2, t - 110) * at(4, t - 120) +
                at(4, t - 210) * at(5, t - 270);
            break;
        }
        v = f + noise;
      }
      check_divergence(v, options, i, t);
      x[t * N + i] = v;
    }
  }
  return {std::move(graph), MultivariateSeries(length, N, std::move(x)), 1};
}

GroundTruthMask ground_truth_mask(const GroundTruthGraph& graph, std::size_t target, std::size_t window) {
  if (window < 1) throw Error("ground_truth_mask: window must be >= 1");
  if (target >= graph.n_vars) throw Error("ground_truth_mask: target out of range");
  GroundTruthMask out{LagMask(window, graph.n_vars), {}};
  for (const auto& e : graph.edges_into(target)) {
    if (e.lag > window) {
      out.unreachable.push_back(e);
      continue;
    }
    out.mask.set(lag_to_row(e.lag, window), e.source);
  }
  return out;
}

}  // namespace lagscope
