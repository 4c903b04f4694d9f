#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lagscope/autodiff/tensor.hpp"

namespace lagscope {

/// T x N matrix of observations (rows are timestamps, columns variables).
/// Entries are finite and variable names are unique.
class MultivariateSeries {
 public:
  MultivariateSeries() = default;
  MultivariateSeries(std::size_t length, std::size_t n_vars, std::vector<double> values,
                     std::vector<std::string> names = {});

  std::size_t length() const noexcept { return length_; }
  std::size_t n_vars() const noexcept { return n_vars_; }
  bool empty() const noexcept { return length_ == 0; }

  double operator()(std::size_t t, std::size_t var) const { return values_[t * n_vars_ + var]; }
  std::span<const double> row(std::size_t t) const {
    return {values_.data() + t * n_vars_, n_vars_};
  }
  std::vector<double> column(std::size_t var) const;
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  /// Index of a named column; throws if absent.
  std::size_t index_of(const std::string& name) const;

  static std::vector<std::string> default_names(std::size_t n_vars);

 private:
  std::size_t length_ = 0;
  std::size_t n_vars_ = 0;
  std::vector<double> values_;
  std::vector<std::string> names_;
};

struct Standardization {
  MultivariateSeries series;
  std::vector<double> means;
  std::vector<double> stds;            // population (1/T) standard deviations
  std::vector<bool> zero_variance;     // columns shifted to 0 rather than scaled
};

/// Column-wise z-scoring with population standard deviation.
Standardization standardize(const MultivariateSeries& series);

/// One supervised example: rows origin-window..origin-1 predict the target at origin.
/// Row p of the input window holds lag (window - p); lag 1 is the last row.
struct WindowedSample {
  std::size_t origin_t = 0;
  std::size_t target_index = 0;
  double target = 0.0;
};

/// Row of a window holding a given lag, and the inverse.
constexpr std::size_t lag_to_row(std::size_t lag, std::size_t window) { return window - lag; }
constexpr std::size_t row_to_lag(std::size_t row, std::size_t window) { return window - row; }

/// Ordered windows over a shared series. Inputs are materialized on demand.
class SupervisedDataset {
 public:
  SupervisedDataset() = default;
  SupervisedDataset(std::shared_ptr<const MultivariateSeries> series, std::size_t window,
                    std::size_t target_index, std::vector<WindowedSample> samples);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t window() const noexcept { return window_; }
  std::size_t target_index() const noexcept { return target_index_; }
  std::size_t n_vars() const { return series_ ? series_->n_vars() : 0; }
  const std::vector<WindowedSample>& samples() const noexcept { return samples_; }
  const WindowedSample& operator[](std::size_t i) const { return samples_[i]; }
  const MultivariateSeries& series() const { return *series_; }

  /// Input window of sample i as a [window, N] tensor.
  ad::Tensor input(std::size_t i) const;
  /// Stacked inputs [B, window, N] of the given samples.
  ad::Tensor batch_inputs(std::span<const std::size_t> indices) const;
  /// Targets [B] of the given samples.
  ad::Tensor batch_targets(std::span<const std::size_t> indices) const;
  /// Samples [begin, end) sharing the same series.
  SupervisedDataset subset(std::size_t begin, std::size_t end) const;

 private:
  std::shared_ptr<const MultivariateSeries> series_;
  std::size_t window_ = 0;
  std::size_t target_index_ = 0;
  std::vector<WindowedSample> samples_;
};

SupervisedDataset make_windows(std::shared_ptr<const MultivariateSeries> series, std::size_t target,
                               std::size_t window, std::size_t stride = 1);
SupervisedDataset make_windows(const MultivariateSeries& series, std::size_t target,
                               std::size_t window, std::size_t stride = 1);

struct TrainTestSplit {
  SupervisedDataset train;
  SupervisedDataset test;
};

/// Chronological split: the first floor(fraction * size) samples train.
TrainTestSplit split_train_test(const SupervisedDataset& dataset, double train_fraction);

/// Numeric delimited text. With a header the first row names the columns,
/// otherwise they are v0..v{N-1}. Errors carry 1-based (line, column).
MultivariateSeries load_csv(const std::filesystem::path& path, char delimiter = ',',
                            bool has_header = true);
void save_csv(const MultivariateSeries& series, const std::filesystem::path& path,
              char delimiter = ',');

struct Sml2010Data {
  MultivariateSeries series;
  std::size_t target_index = 0;
};

inline constexpr const char* kSml2010Target = "Temperature_Comedor_Sensor";

/// Whitespace-separated SML2010 file. Date and time columns are dropped, the
/// dining-room temperature is the target and the 19 remaining sensor
/// channels are kept (see sml2010_excluded_columns()).
Sml2010Data load_sml2010(const std::filesystem::path& path);

/// Non-date columns that are not sensor channels used as drivers.
std::span<const char* const> sml2010_excluded_columns();

}  // namespace lagscope
