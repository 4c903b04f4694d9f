#include "lagscope/series.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lagscope/error.hpp"

namespace lagscope {

MultivariateSeries::MultivariateSeries(std::size_t length, std::size_t n_vars,
                                       std::vector<double> values, std::vector<std::string> names)
    : length_(length), n_vars_(n_vars), values_(std::move(values)), names_(std::move(names)) {
  if (length_ == 0 || n_vars_ == 0) throw Error("series: empty input");
  if (values_.size() != length_ * n_vars_) {
    throw Error("series: " + std::to_string(values_.size()) + " values for " +
                std::to_string(length_) + "x" + std::to_string(n_vars_));
  }
  if (names_.empty()) names_ = default_names(n_vars_);
  if (names_.size() != n_vars_) throw Error("series: name count does not match variable count");
  if (std::set<std::string>(names_.begin(), names_.end()).size() != names_.size()) {
    throw Error("series: variable names must be unique");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error("series: non-finite value at row " + std::to_string(i / n_vars_) + ", column " +
                  std::to_string(i % n_vars_));
    }
  }
}

std::vector<double> MultivariateSeries::column(std::size_t var) const {
  std::vector<double> out(length_);
  for (std::size_t t = 0; t < length_; ++t) out[t] = (*this)(t, var);
  return out;
}

std::size_t MultivariateSeries::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error("series: no column named '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<std::string> MultivariateSeries::default_names(std::size_t n_vars) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_vars; ++i) names.push_back("v" + std::to_string(i));
  return names;
}

Standardization standardize(const MultivariateSeries& series) {
  if (series.empty()) throw Error("standardize: empty input");
  const std::size_t T = series.length(), N = series.n_vars();
  if (T < 2) throw Error("standardize: need at least 2 rows");

  Standardization out;
  out.means.assign(N, 0.0);
  out.stds.assign(N, 0.0);
  out.zero_variance.assign(N, false);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < N; ++j) out.means[j] += series(t, j);
  }
  for (double& m : out.means) m /= static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < N; ++j) {
      const double d = series(t, j) - out.means[j];
      out.stds[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < N; ++j) {
    out.stds[j] = std::sqrt(out.stds[j] / static_cast<double>(T));
    out.zero_variance[j] = !(out.stds[j] > 0.0);
  }

  std::vector<double> values(T * N);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < N; ++j) {
      const double centred = series(t, j) - out.means[j];
      values[t * N + j] = out.zero_variance[j] ? 0.0 : centred / out.stds[j];
    }
  }
  out.series = MultivariateSeries(T, N, std::move(values), series.names());
  return out;
}

SupervisedDataset::SupervisedDataset(std::shared_ptr<const MultivariateSeries> series,
                                     std::size_t window, std::size_t target_index,
                                     std::vector<WindowedSample> samples)
    : series_(std::move(series)), window_(window), target_index_(target_index),
      samples_(std::move(samples)) {}

ad::Tensor SupervisedDataset::input(std::size_t i) const {
  const std::size_t N = series_->n_vars();
  const std::size_t first = samples_.at(i).origin_t - window_;
  const auto all = series_->values();
  return ad::Tensor({window_, N}, std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(first * N),
                                                      all.begin() + static_cast<std::ptrdiff_t>((first + window_) * N)));
}

ad::Tensor SupervisedDataset::batch_inputs(std::span<const std::size_t> indices) const {
  const std::size_t N = series_->n_vars();
  const std::size_t block = window_ * N;
  ad::Tensor out({indices.size(), window_, N});
  const auto all = series_->values();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t first = samples_.at(indices[b]).origin_t - window_;
    std::copy_n(all.data() + first * N, block, out.data() + b * block);
  }
  return out;
}

ad::Tensor SupervisedDataset::batch_targets(std::span<const std::size_t> indices) const {
  ad::Tensor out({indices.size()});
  for (std::size_t b = 0; b < indices.size(); ++b) out[b] = samples_.at(indices[b]).target;
  return out;
}

SupervisedDataset SupervisedDataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > samples_.size()) throw Error("dataset: subset out of range");
  return SupervisedDataset(series_, window_, target_index_,
                           std::vector<WindowedSample>(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                                       samples_.begin() + static_cast<std::ptrdiff_t>(end)));
}

SupervisedDataset make_windows(std::shared_ptr<const MultivariateSeries> series, std::size_t target,
                               std::size_t window, std::size_t stride) {
  if (!series || series->empty()) throw Error("make_windows: empty input");
  if (window < 1) throw Error("make_windows: window must be >= 1");
  if (stride < 1) throw Error("make_windows: stride must be >= 1");
  if (target >= series->n_vars()) {
    throw Error("make_windows: target index " + std::to_string(target) + " out of range for " +
                std::to_string(series->n_vars()) + " variables");
  }
  if (window >= series->length()) throw Error("make_windows: window exceeds series length");

  std::vector<WindowedSample> samples;
  for (std::size_t t = window; t < series->length(); t += stride) {
    samples.push_back({t, target, (*series)(t, target)});
  }
  return SupervisedDataset(std::move(series), window, target, std::move(samples));
}

SupervisedDataset make_windows(const MultivariateSeries& series, std::size_t target,
                               std::size_t window, std::size_t stride) {
  return make_windows(std::make_shared<const MultivariateSeries>(series), target, window, stride);
}

TrainTestSplit split_train_test(const SupervisedDataset& dataset, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error("split_train_test: fraction must lie in (0, 1)");
  }
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(dataset.size())));
  if (n_train == 0 || n_train == dataset.size()) {
    throw Error("split_train_test: fraction " + std::to_string(train_fraction) + " leaves an empty partition of " +
                std::to_string(dataset.size()) + " samples");
  }
  return {dataset.subset(0, n_train), dataset.subset(n_train, dataset.size())};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delimiter)) fields.push_back(trim(field));
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_cell(const std::string& cell, std::size_t line, std::size_t column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  const std::string where = "(" + std::to_string(line) + "," + std::to_string(column) + ")";
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw Error("non-numeric cell '" + cell + "' at " + where);
  }
  if (!std::isfinite(v)) throw Error("non-finite cell '" + cell + "' at " + where);
  return v;
}

}  // namespace

MultivariateSeries load_csv(const std::filesystem::path& path, char delimiter, bool has_header) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open " + path.string());

  std::vector<std::string> names;
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::string line;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, delimiter);
    if (header_pending) {
      names = std::move(fields);
      width = names.size();
      header_pending = false;
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw Error("load_csv: ragged row at line " + std::to_string(line_no) + ": expected " +
                  std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) values.push_back(parse_cell(fields[c], line_no, c + 1));
    ++rows;
  }
  if (rows == 0) throw Error("load_csv: empty input in " + path.string());
  return MultivariateSeries(rows, width, std::move(values), std::move(names));
}

void save_csv(const MultivariateSeries& series, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_csv: cannot write " + path.string());
  const auto& names = series.names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? std::string(1, delimiter) : "") << names[j];
  out << '\n';
  char buf[40];
  for (std::size_t t = 0; t < series.length(); ++t) {
    for (std::size_t j = 0; j < series.n_vars(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", series(t, j));
      if (j) out << delimiter;
      out << buf;
    }
    out << '\n';
  }
}

namespace {

// Indoor temperature of the second room (a second target-like channel) and
// the calendar day are not external sensors.
constexpr std::array<const char*, 2> kSml2010Excluded = {"Temperature_Habitacion_Sensor", "Day_Of_Week"};

std::string strip_header_token(std::string tok) {
  while (!tok.empty() && tok.front() == '#') tok.erase(0, 1);
  const auto colon = tok.find(':');
  if (colon != std::string::npos &&
      std::all_of(tok.begin(), tok.begin() + static_cast<std::ptrdiff_t>(colon), ::isdigit)) {
    tok.erase(0, colon + 1);
  }
  return tok;
}

}  // namespace

std::span<const char* const> sml2010_excluded_columns() { return kSml2010Excluded; }

Sml2010Data load_sml2010(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_sml2010: cannot open " + path.string());

  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    for (auto& tok : split_whitespace(line)) {
      auto name = strip_header_token(tok);
      if (!name.empty()) header.push_back(std::move(name));
    }
  }
  if (header.size() < 3) throw Error("load_sml2010: header must list date, time and sensor columns");

  const auto target_it = std::find(header.begin(), header.end(), kSml2010Target);
  if (target_it == header.end()) {
    throw Error(std::string("load_sml2010: missing target column '") + kSml2010Target + "'");
  }

  // Columns 0 and 1 are date and time.
  std::vector<std::size_t> keep;
  std::vector<std::string> names;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const bool excluded = std::find_if(kSml2010Excluded.begin(), kSml2010Excluded.end(), [&](const char* e) {
                            return header[c] == e;
                          }) != kSml2010Excluded.end();
    if (excluded) continue;
    keep.push_back(c);
    names.push_back(header[c]);
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != header.size()) {
      throw Error("load_sml2010: ragged row at line " + std::to_string(line_no) + ": expected " +
                  std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c : keep) values.push_back(parse_cell(fields[c], line_no, c + 1));
    ++rows;
  }
  if (rows == 0) throw Error("load_sml2010: no data rows in " + path.string());

  Sml2010Data data;
  data.series = MultivariateSeries(rows, keep.size(), std::move(values), std::move(names));
  data.target_index = data.series.index_of(kSml2010Target);
  return data;
}

}  // namespace lagscope
