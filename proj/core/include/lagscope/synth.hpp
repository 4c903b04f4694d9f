#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <vector>

#include "lagscope/error.hpp"
#include "lagscope/lag_mask.hpp"
#include "lagscope/series.hpp"

namespace lagscope {

/// linear: drawn by sample_linear_system, |alpha| <= 0.4.
/// linear_custom: hand-built linear system with unrestricted coefficients.
enum class GraphKind { linear, linear_custom, nonlinear_fixed };

std::string to_string(GraphKind kind);
GraphKind parse_graph_kind(std::string_view name);

/// target_t depends on source_{t - lag} with strength alpha.
struct GroundTruthEdge {
  std::size_t target = 0;
  std::size_t source = 0;
  double alpha = 0.0;
  std::size_t lag = 1;

  friend bool operator==(const GroundTruthEdge&, const GroundTruthEdge&) = default;
};

struct GroundTruthGraph {
  std::size_t n_vars = 0;
  std::vector<GroundTruthEdge> edges;
  std::vector<double> noise_scale;  // beta per variable
  GraphKind kind = GraphKind::linear;
  std::optional<std::uint64_t> seed;

  std::size_t max_lag() const;
  std::vector<GroundTruthEdge> edges_into(std::size_t target) const;
  /// Throws if lags leave [1, 300), indices are out of range, or a linear
  /// coefficient exceeds 0.4 in magnitude.
  void validate() const;

  friend bool operator==(const GroundTruthGraph&, const GroundTruthGraph&) = default;
};

inline constexpr std::size_t kMaxLagExclusive = 300;
inline constexpr double kLinearAlphaBound = 0.4;
inline constexpr std::size_t kLinearLagMax = 250;

nlohmann::json graph_to_json(const GroundTruthGraph& graph);
GroundTruthGraph graph_from_json(const nlohmann::json& doc);
void save_graph(const GroundTruthGraph& graph, const std::filesystem::path& path);
GroundTruthGraph load_graph(const std::filesystem::path& path);

/// Random linear system: N ~ U{5..15}; per variable n_i ~ U{0..N} regressor
/// draws from U{0..N-1}, deduplicated keeping the first; alpha ~ U[-0.4, 0.4];
/// lag ~ U{1..250}.
GroundTruthGraph sample_linear_system(std::uint64_t seed);

/// Replaces Gaussian draws: returns epsilon for (variable, t).
using NoiseSource = std::function<double(std::size_t var, std::size_t t)>;

struct SimulationOptions {
  /// When false, epsilon is zero wherever the defining equation applies;
  /// the bootstrap prefix still receives noise.
  bool recursion_noise = true;
  NoiseSource noise;
  double divergence_limit = 1e6;
};

/// Raised when a simulated value exceeds the divergence limit.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// For t < max lag every value is bootstrap noise beta_i * eps; afterwards
/// x_t^(i) = sum alpha_ij x_{t - lag_ij}^(j) + beta_i * eps.
MultivariateSeries simulate_linear(const GroundTruthGraph& graph, std::size_t length, std::uint64_t seed,
                                   const SimulationOptions& options = {});

struct SyntheticCase {
  GroundTruthGraph graph;
  MultivariateSeries series;
  std::size_t attempts = 1;
};

/// Samples and simulates a linear system, redrawing the graph from a derived
/// seed whenever the simulation diverges. Attempt 0 uses `seed` itself.
SyntheticCase generate_linear_case(std::uint64_t seed, std::size_t length,
                                   const SimulationOptions& options = {}, std::size_t max_attempts = 100000);

/// The fixed six-variable nonlinear system with its ground-truth edges.
/// Each equation applies from its own largest lag on; earlier samples are
/// bootstrap noise. Noise scales: 1 for X0..X2, 0.1 for X3..X5.
SyntheticCase simulate_nonlinear(std::size_t length, std::uint64_t seed, const SimulationOptions& options = {});
GroundTruthGraph nonlinear_ground_truth();

struct GroundTruthMask {
  LagMask mask;
  std::vector<GroundTruthEdge> unreachable;  // lag > window
};

/// Window-by-N mask with a 1 at (window - lag, source) for every edge into target.
GroundTruthMask ground_truth_mask(const GroundTruthGraph& graph, std::size_t target, std::size_t window);

}  // namespace lagscope
