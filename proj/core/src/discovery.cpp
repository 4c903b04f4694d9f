#include "lagscope/discovery.hpp"

#include <algorithm>
#include <map>

#include "lagscope/error.hpp"
#include "lagscope/parallel.hpp"

namespace lagscope {

namespace {

std::uint64_t node_seed(std::uint64_t seed, std::size_t node) {
  std::uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL * (node + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NodeAnalysis analyze(const NodeAnalyzer& analyzer, const MultivariateSeries& series, std::size_t node,
                     std::uint64_t seed) {
  try {
    return analyzer(series, node, node_seed(seed, node));
  } catch (const NumericalError& e) {
    throw NumericalError("node '" + series.names()[node] + "': " + e.what());
  }
}

void check_mask(const NodeAnalysis& a, std::size_t n_vars, std::size_t node) {
  if (a.binary.cols() != n_vars) {
    throw Error("discover: mask for node " + std::to_string(node) + " has " + std::to_string(a.binary.cols()) +
                " columns, expected " + std::to_string(n_vars));
  }
}

}  // namespace

NodeAnalyzer make_default_analyzer(const DiscoveryConfig& config) {
  return [config](const MultivariateSeries& series, std::size_t target, std::uint64_t seed) {
    models::ModelConfig mc = config.model;
    mc.n_vars = series.n_vars();
    auto shared = std::make_shared<const MultivariateSeries>(series);
    const SupervisedDataset data = make_windows(shared, target, mc.window, config.stride);
    const TrainTestSplit split = split_train_test(data, config.train_fraction);
    auto model = models::make_model(mc, seed);
    models::TrainConfig tc = config.train;
    tc.seed = seed;
    const models::TrainResult history = models::train(*model, split.train, &split.test, tc);
    NodeAnalysis out;
    out.train_mse = history.history.back().train_mse;
    out.test_mse = history.history.back().test_mse;
    out.binary = explain(*model, split.test, config.lbm, seed).binary;
    return out;
  };
}

std::vector<Dependency> TemporalKnowledgeGraph::dependencies(std::size_t target, std::size_t depth) const {
  std::vector<Dependency> out;
  for (const GraphEdge& e : edges) {
    if (e.dst == target && e.depth == depth) out.push_back({e.dst, e.src, true, e.lags});
  }
  return out;
}

nlohmann::json knowledge_graph_to_json(const TemporalKnowledgeGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const GraphNode& n : graph.nodes) {
    nlohmann::json j = {{"id", n.id}, {"name", n.name}};
    if (n.modelled) {
      j["test_mse"] = n.test_mse;
      j["train_mse"] = n.train_mse;
    } else {
      j["test_mse"] = nullptr;
    }
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const GraphEdge& e : graph.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"lags", e.lags}, {"depth", e.depth}});
  }
  return {{"target", graph.target},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)},
          {"models_trained", graph.models_trained}};
}

TemporalKnowledgeGraph discover(const MultivariateSeries& input, std::size_t target, const DiscoveryConfig& config,
                                const NodeAnalyzer& analyzer_in) {
  if (target >= input.n_vars()) {
    throw Error("discover: target " + std::to_string(target) + " out of range for " +
                std::to_string(input.n_vars()) + " variables");
  }
  if (config.depth_limit < 1 || config.depth_limit > 2) throw Error("discover: depth limit must be 1 or 2");
  const MultivariateSeries series = config.standardize ? standardize(input).series : input;
  const NodeAnalyzer analyzer = analyzer_in ? analyzer_in : make_default_analyzer(config);
  const std::size_t n = series.n_vars();

  std::map<std::size_t, NodeAnalysis> analyses;
  analyses[target] = analyze(analyzer, series, target, config.seed);
  check_mask(analyses[target], n, target);

  std::vector<std::size_t> sources;
  for (const Dependency& d : extract_dependencies(analyses[target].binary, target)) {
    if (d.present) sources.push_back(d.source);
  }

  if (config.depth_limit >= 2) {
    std::vector<std::size_t> pending;
    for (std::size_t j : sources) {
      if (j != target) pending.push_back(j);
    }
    std::vector<NodeAnalysis> results(pending.size());
    parallel_for(pending.size(), [&](std::size_t i) { results[i] = analyze(analyzer, series, pending[i], config.seed); });
    for (std::size_t i = 0; i < pending.size(); ++i) {
      check_mask(results[i], n, pending[i]);
      analyses[pending[i]] = std::move(results[i]);
    }
  }

  TemporalKnowledgeGraph graph;
  graph.target = target;
  graph.models_trained = analyses.size();
  for (std::size_t v = 0; v < n; ++v) {
    GraphNode node{v, series.names()[v], false, 0.0, 0.0};
    if (auto it = analyses.find(v); it != analyses.end()) {
      node.modelled = true;
      node.train_mse = it->second.train_mse;
      node.test_mse = it->second.test_mse;
    }
    graph.nodes.push_back(std::move(node));
  }
  auto add_edges = [&](std::size_t dst, std::size_t depth) {
    for (Dependency& d : extract_dependencies(analyses.at(dst).binary, dst)) {
      if (d.present) graph.edges.push_back({d.source, dst, std::move(d.lags), depth});
    }
  };
  add_edges(target, 1);
  if (config.depth_limit >= 2) {
    for (std::size_t j : sources) {
      if (j != target) add_edges(j, 2);
    }
  }
  return graph;
}

std::vector<LagRun> lag_runs(std::span<const Dependency> predicted) {
  std::vector<LagRun> runs;
  for (const Dependency& d : predicted) {
    std::vector<std::size_t> lags = d.lags;
    std::sort(lags.begin(), lags.end());
    lags.erase(std::unique(lags.begin(), lags.end()), lags.end());
    for (std::size_t i = 0; i < lags.size();) {
      std::size_t k = i;
      while (k + 1 < lags.size() && lags[k + 1] == lags[k] + 1) ++k;
      runs.push_back({d.source, lags[i], lags[k]});
      i = k + 1;
    }
  }
  return runs;
}

EdgeScore score_edges(std::span<const Dependency> predicted, std::span<const GroundTruthEdge> truth,
                      const EdgeMatchConfig& config) {
  const std::vector<LagRun> runs = lag_runs(predicted);
  const std::size_t w = config.tolerance;
  auto covers = [w](const LagRun& r, const GroundTruthEdge& e) {
    return r.source == e.source && e.lag + w >= r.first && e.lag <= r.last + w;
  };

  EdgeScore score;
  score.tolerance = w;
  score.predicted_units = runs.size();
  for (const LagRun& r : runs) {
    if (std::any_of(truth.begin(), truth.end(), [&](const GroundTruthEdge& e) { return covers(r, e); })) {
      ++score.matched_units;
    }
  }
  for (const GroundTruthEdge& e : truth) {
    const bool hit = std::any_of(runs.begin(), runs.end(), [&](const LagRun& r) { return covers(r, e); });
    (hit ? score.matched : score.missed).push_back(e);
  }
  score.precision = runs.empty() ? 0.0 : static_cast<double>(score.matched_units) / static_cast<double>(runs.size());
  score.recall = truth.empty() ? 0.0 : static_cast<double>(score.matched.size()) / static_cast<double>(truth.size());
  return score;
}

nlohmann::json score_to_json(const EdgeScore& score) {
  auto edges = [](const std::vector<GroundTruthEdge>& list) {
    nlohmann::json a = nlohmann::json::array();
    for (const GroundTruthEdge& e : list) a.push_back({{"source", e.source}, {"target", e.target}, {"lag", e.lag}});
    return a;
  };
  return {{"precision", score.precision},
          {"recall", score.recall},
          {"tolerance", score.tolerance},
          {"predicted_units", score.predicted_units},
          {"matched_units", score.matched_units},
          {"matched", edges(score.matched)},
          {"missed", edges(score.missed)}};
}

}  // namespace lagscope
