#include <cmath>
#include <fstream>
#include <sstream>

#include "lagscope/error.hpp"
#include "lagscope_cli/cli.hpp"

namespace lagscope::cli {

std::string heatmap_pgm(const ad::Tensor& map) {
  if (map.rank() != 2) throw Error("heatmap: expected a [rows, N] map, got " + ad::shape_string(map.shape()));
  const std::size_t rows = map.shape()[0], cols = map.shape()[1];
  std::ostringstream out;
  out << "P2\n" << cols << ' ' << rows << "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = map.at(r, c);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error("heatmap: cell (" + std::to_string(r) + "," + std::to_string(c) + ") outside [0, 1]");
      }
      out << (c ? " " : "") << static_cast<int>(std::floor(255.0 * v + 0.5));
    }
    out << '\n';
  }
  return out.str();
}

void render_heatmap(const ad::Tensor& map, const std::filesystem::path& path) {
  const std::string body = heatmap_pgm(map);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << body;
  if (!f) throw Error("write failed: " + path.string());
}

}  // namespace lagscope::cli
