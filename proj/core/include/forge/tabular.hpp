#ifndef FORGE_TABULAR_HPP
#define FORGE_TABULAR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "forge/errors.hpp"
#include "forge/matrix.hpp"

namespace forge {

// One tabular classification dataset: a binary protected column A kept
// separate from the feature matrix, plus a binary target. column_names lists
// the m+1 model-visible columns (A and the m features) in presentation
// order, with A sitting at protected_index.
struct TabularDataset {
  std::vector<std::int8_t> a;
  MatrixD x;  // n x m, protected column excluded
  std::vector<std::int8_t> y;
  int protected_index = 0;
  std::vector<std::string> column_names;

  std::size_t n_rows() const { return a.size(); }
  std::size_t n_features() const { return x.cols(); }

  void validate() const;

  // n x (m+1) matrix with A spliced in at protected_index; this is the
  // feature block a predictor actually sees.
  MatrixD combined() const;
};

inline void TabularDataset::validate() const {
  const std::size_t n = a.size();
  if (n < 1) throw DimensionError("dataset has no rows");
  if (y.size() != n || (x.rows() != n && x.cols() > 0))
    throw DimensionError("dataset columns are not row-aligned");
  if (column_names.size() != x.cols() + 1)
    throw DimensionError("column_names must cover A plus every feature");
  if (protected_index < 0 ||
      static_cast<std::size_t>(protected_index) >= column_names.size())
    throw DimensionError("protected_index out of range");
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != 0 && a[i] != 1)
      throw FormatError("protected column must be binary after encoding");
    if (y[i] != 0 && y[i] != 1)
      throw FormatError("target column must be binary after encoding");
  }
}

inline MatrixD TabularDataset::combined() const {
  const std::size_t n = n_rows();
  const std::size_t m = n_features();
  MatrixD out(n, m + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t src = 0;
    for (std::size_t j = 0; j <= m; ++j) {
      if (j == static_cast<std::size_t>(protected_index))
        out(i, j) = static_cast<double>(a[i]);
      else
        out(i, j) = x(i, src++);
    }
  }
  return out;
}

}  // namespace forge

#endif  // FORGE_TABULAR_HPP
