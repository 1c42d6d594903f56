#include "mulearn/fit.hpp"

#include <algorithm>
#include <cmath>

namespace mulearn {

std::vector<double> least_squares(const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& y, double rcond,
                                  int* deficient_column) {
  if (rows.empty()) throw FitError("least squares needs at least one row");
  if (rows.size() != y.size()) throw FitError("row/response count mismatch");
  const std::size_t n = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != n) throw FitError("ragged regressor rows");
  }
  if (n == 0) throw FitError("least squares needs at least one column");

  // Normal equations: G = X^T X, b = X^T y.
  std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
  std::vector<double> b(n, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    for (std::size_t i = 0; i < n; ++i) {
      b[i] += row[i] * y[k];
      for (std::size_t j = i; j < n; ++j) g[i][j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) g[i][j] = g[j][i];
  }

  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::fabs(g[i][i]));
  if (scale == 0.0) scale = 1.0;

  // Gaussian elimination with partial pivoting; track column origin so a
  // collapsed pivot can name the undetermined regressor.
  std::vector<int> col_of(n);
  for (std::size_t i = 0; i < n; ++i) col_of[i] = static_cast<int>(i);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::fabs(g[i][k]) > std::fabs(g[pivot][k])) pivot = i;
    }
    if (pivot != k) {
      std::swap(g[pivot], g[k]);
      std::swap(b[pivot], b[k]);
    }
    if (std::fabs(g[k][k]) <= rcond * scale) {
      if (deficient_column) {
        *deficient_column = col_of[k];
        return {};
      }
      throw FitError("regressor matrix is rank deficient");
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      double f = g[i][k] / g[k][k];
      for (std::size_t j = k; j < n; ++j) g[i][j] -= f * g[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> beta(n, 0.0);
  for (std::size_t ik = n; ik-- > 0;) {
    double acc = b[ik];
    for (std::size_t j = ik + 1; j < n; ++j) acc -= g[ik][j] * beta[j];
    beta[ik] = acc / g[ik][ik];
  }
  return beta;
}

std::vector<DerivativeSample> derivative_samples(
    const TrajectoryData& data, const std::vector<std::string>& state_vars) {
  std::vector<DerivativeSample> out;
  for (const auto& episode : data.episodes) {
    for (std::size_t i = 0; i + 1 < episode.size(); ++i) {
      const auto& step = episode[i];
      const auto& next = episode[i + 1].state;
      if (step.action.resolved.empty() || step.duration <= 0) continue;
      State applied = step.state;
      for (const auto& [var, value] : step.action.resolved) applied[var] = value;
      DerivativeSample sample;
      sample.input = step.action.resolved;
      // Midpoint regressor: finite differences over the segment estimate the
      // derivative at its center, which is exact when the state is at most
      // quadratic in time along the flow.
      for (const auto& [var, value] : applied) {
        auto it = next.find(var);
        double observed = it == next.end() ? value : it->second;
        sample.at[var] = 0.5 * (value + observed);
      }
      for (const auto& var : state_vars) {
        auto pre = applied.find(var);
        auto post = next.find(var);
        if (pre == applied.end() || post == next.end()) {
          throw FitError("variable '" + var + "' missing from trajectory data");
        }
        sample.rate[var] = (post->second - pre->second) / step.duration;
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

}  // namespace mulearn
