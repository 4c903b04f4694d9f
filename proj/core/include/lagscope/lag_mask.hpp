#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace lagscope {

/// Binary window-by-variable matrix; row p holds lag (rows - p).
class LagMask {
 public:
  LagMask() = default;
  LagMask(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols, 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on = true) { cells_[r * cols_ + c] = on ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : cells_) n += v;
    return n;
  }
  const std::vector<std::uint8_t>& cells() const noexcept { return cells_; }

  friend bool operator==(const LagMask&, const LagMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> cells_;
};

}  // namespace lagscope
