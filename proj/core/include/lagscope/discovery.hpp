#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lagscope/lbm.hpp"
#include "lagscope/models/model.hpp"
#include "lagscope/models/train.hpp"
#include "lagscope/series.hpp"
#include "lagscope/synth.hpp"

namespace lagscope {

struct DiscoveryConfig {
  models::ModelConfig model;  // kind, window and sizes; n_vars is taken from the series
  models::TrainConfig train;
  LbmConfig lbm;
  double train_fraction = 0.8;
  std::size_t stride = 1;
  std::size_t depth_limit = 2;  // 1 or 2
  bool standardize = true;
  std::uint64_t seed = 0;
};

/// Outcome of modelling one target: its binarized mask and fit metrics.
struct NodeAnalysis {
  LagMask binary;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

/// Trains F for `target` on the series and explains it. Replaceable so the
/// recursion can be exercised with prescribed masks.
using NodeAnalyzer =
    std::function<NodeAnalysis(const MultivariateSeries& series, std::size_t target, std::uint64_t seed)>;

/// Default analyzer: window, chronological split, train, learn and binarize a mask.
NodeAnalyzer make_default_analyzer(const DiscoveryConfig& config);

struct GraphNode {
  std::size_t id = 0;
  std::string name;
  bool modelled = false;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::vector<std::size_t> lags;  // ascending, nonempty
  std::size_t depth = 1;
};

struct TemporalKnowledgeGraph {
  std::size_t target = 0;
  std::vector<GraphNode> nodes;  // by id
  std::vector<GraphEdge> edges;  // by depth, destination, source
  std::size_t models_trained = 0;

  /// Edges into `target` at the given depth as per-source dependencies.
  std::vector<Dependency> dependencies(std::size_t target, std::size_t depth = 1) const;
};

nlohmann::json knowledge_graph_to_json(const TemporalKnowledgeGraph& graph);

/// Models `target`, then each discovered source once (depth 2). A source
/// equal to the target reuses the first model. Per-node seeds derive from
/// (config.seed, node), so the result does not depend on scheduling.
TemporalKnowledgeGraph discover(const MultivariateSeries& series, std::size_t target, const DiscoveryConfig& config,
                                const NodeAnalyzer& analyzer = {});

struct EdgeMatchConfig {
  std::size_t tolerance = 5;  // lags
};

struct LagRun {
  std::size_t source = 0;
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Maximal runs of consecutive lags per source.
std::vector<LagRun> lag_runs(std::span<const Dependency> predicted);

struct EdgeScore {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tolerance = 0;
  std::size_t predicted_units = 0;
  std::size_t matched_units = 0;
  std::vector<GroundTruthEdge> matched;
  std::vector<GroundTruthEdge> missed;
};

/// Units are lag runs; a truth edge (j, lag) matches a run on j spanning
/// [first - w, last + w]. Precision is matched units over units, recall
/// matched truth edges over truth edges; both are 0 when their denominator is.
EdgeScore score_edges(std::span<const Dependency> predicted, std::span<const GroundTruthEdge> truth,
                      const EdgeMatchConfig& config = {});

nlohmann::json score_to_json(const EdgeScore& score);

}  // namespace lagscope
