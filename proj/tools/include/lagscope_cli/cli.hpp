#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lagscope/autodiff/tensor.hpp"

namespace lagscope::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one subcommand; args exclude the program name. Every run writes
/// config.json (the fully resolved parameters) into its --out directory, and
/// `--config <file>` replays it, with explicitly given flags taking priority.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// ASCII PGM ("P2"): width N, height = rows, maxval 255, each cell
/// floor(255 v + 0.5). Cells must lie in [0, 1].
std::string heatmap_pgm(const ad::Tensor& map);
void render_heatmap(const ad::Tensor& map, const std::filesystem::path& path);

}  // namespace lagscope::cli
