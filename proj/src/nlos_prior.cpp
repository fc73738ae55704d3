// SPDX-License-Identifier: Apache-2.0
#include "toaloc/nlos_prior.hpp"

#include "toaloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace toaloc {

namespace {

std::vector<double> running_sum(const std::vector<double>& masses) {
  std::vector<double> cumulative(masses.size());
  std::partial_sum(masses.begin(), masses.end(), cumulative.begin());
  return cumulative;
}

}  // namespace

NlosPrior NlosPrior::build(double sigma_clk, int K, int L) {
  if (!(sigma_clk > 0.0) || !std::isfinite(sigma_clk))
    throw invalid_argument("NLOS prior: sigma_clk must be positive, got " + std::to_string(sigma_clk));
  if (K < 1) throw invalid_argument("NLOS prior: K must be >= 1, got " + std::to_string(K));
  if (L < 2) throw invalid_argument("NLOS prior: L must be >= 2, got " + std::to_string(L));

  NlosPrior prior;
  prior.sigma_clk_ = sigma_clk;
  prior.K_ = K;
  prior.L_ = L;
  prior.masses_.resize(static_cast<std::size_t>(L) + static_cast<std::size_t>(K));

  const double los = 1.0 / (2.0 * K);
  const double denom = static_cast<double>(L) * static_cast<double>(L - 1);
  for (int l = 0; l < L + K; ++l)
    prior.masses_[l] = l < K ? los : static_cast<double>(L - l + K - 1) / denom;

  prior.cumulative_ = running_sum(prior.masses_);
  return prior;
}

NlosPrior NlosPrior::from_masses(double sigma_clk, std::vector<double> masses) {
  if (!(sigma_clk > 0.0) || !std::isfinite(sigma_clk))
    throw invalid_argument("NLOS prior: sigma_clk must be positive");
  if (masses.empty()) throw invalid_argument("NLOS prior: empty mass vector");
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0) || !std::isfinite(m)) throw invalid_argument("NLOS prior: masses must be finite and non-negative");
    total += m;
  }
  if (!(total > 0.0)) throw invalid_argument("NLOS prior: masses sum to zero");
  for (double& m : masses) m /= total;

  NlosPrior prior;
  prior.sigma_clk_ = sigma_clk;
  prior.masses_ = std::move(masses);
  prior.cumulative_ = running_sum(prior.masses_);
  return prior;
}

std::size_t NlosPrior::index_for(double u) const {
  const double target = u * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
  std::size_t index = static_cast<std::size_t>(it - cumulative_.begin());
  if (index >= masses_.size()) index = masses_.size() - 1;
  // Rounding can land on a trailing zero-mass point; step back to real support.
  while (index > 0 && masses_[index] == 0.0) --index;
  return index;
}

}  // namespace toaloc
