// SPDX-License-Identifier: Apache-2.0
#include "toaloc/error.hpp"
#include "toaloc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace toaloc {

std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> errors) {
  if (errors.empty()) throw invalid_argument("empirical_cdf: empty input");
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(errors.size());
  for (std::size_t k = 0; k < errors.size(); ++k) out.emplace_back(errors[k], static_cast<double>(k + 1) / n);
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw invalid_argument("percentile: empty input");
  if (!(p > 0.0 && p <= 1.0)) throw invalid_argument("percentile: p must be in (0, 1]");
  const std::size_t n = values.size();
  // Guard against p * n landing a rounding error above an integer.
  const double rank = std::ceil(p * static_cast<double>(n) - 1e-9);
  const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(rank, 1.0)), 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

namespace {

double ratio(double value, double base) {
  if (base == 0.0) return value == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return value / base;
}

}  // namespace

std::vector<ReportRow> compare_report(const std::vector<ErrorRecord>& records) {
  std::vector<std::string> order;
  for (const ErrorRecord& r : records)
    if (std::find(order.begin(), order.end(), r.solver) == order.end()) order.push_back(r.solver);

  std::vector<ReportRow> rows;
  for (const std::string& solver : order) {
    std::vector<double> errors;
    std::size_t converged = 0;
    for (const ErrorRecord& r : records) {
      if (r.solver != solver) continue;
      errors.push_back(r.error_meters);
      converged += r.converged ? 1 : 0;
    }
    ReportRow row;
    row.solver = solver;
    row.count = errors.size();
    row.p50 = percentile(errors, 0.5);
    row.p90 = percentile(errors, 0.9);
    double sum = 0.0;
    for (double e : errors) sum += e;
    row.mean = sum / static_cast<double>(errors.size());
    row.convergence_rate = static_cast<double>(converged) / static_cast<double>(errors.size());
    rows.push_back(std::move(row));
  }
  for (ReportRow& row : rows) {
    row.ratio_p50 = ratio(row.p50, rows.front().p50);
    row.ratio_p90 = ratio(row.p90, rows.front().p90);
  }
  return rows;
}

}  // namespace toaloc
