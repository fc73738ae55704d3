// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <vector>

namespace toaloc {

/// Discrete prior over the non-line-of-sight bias. Mass `masses[l]` sits on
/// the bias value l * sigma_clk / 10.
///
/// The first K grid points share half the mass uniformly (biases from
/// unresolvable multipath on top of a present LOS path); the remaining L
/// points share the other half with linearly decaying weights (LOS path
/// absent).
class NlosPrior {
public:
  /// Piecewise prior: 1/(2K) for l < K, (L - l + K - 1) / (L (L - 1)) for
  /// K <= l < L + K. Requires sigma_clk > 0, K >= 1, L >= 2.
  static NlosPrior build(double sigma_clk, int K, int L);

  /// Arbitrary mass function on the same grid. Masses are normalized; they
  /// must be non-negative with a positive sum.
  static NlosPrior from_masses(double sigma_clk, std::vector<double> masses);

  /// All mass on zero bias.
  static NlosPrior line_of_sight(double sigma_clk) { return from_masses(sigma_clk, {1.0}); }

  double sigma_clk() const { return sigma_clk_; }
  int K() const { return K_; }  // 0 when built from raw masses
  int L() const { return L_; }
  std::size_t size() const { return masses_.size(); }
  std::span<const double> masses() const { return masses_; }
  double mass(std::size_t l) const { return l < masses_.size() ? masses_[l] : 0.0; }

  double spacing() const { return sigma_clk_ / 10.0; }
  double bias_value(std::size_t l) const { return static_cast<double>(l) * spacing(); }
  double max_bias() const { return bias_value(masses_.empty() ? 0 : masses_.size() - 1); }

  /// Draw gamma ~ Cat(pi) and return its bias value in meters.
  template <class Rng>
  double sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return bias_value(index_for(u(rng)));
  }

private:
  NlosPrior() = default;
  std::size_t index_for(double u) const;

  double sigma_clk_ = 1.0;
  int K_ = 0;
  int L_ = 0;
  std::vector<double> masses_;
  std::vector<double> cumulative_;
};

template <class Rng>
double sample_bias(const NlosPrior& prior, Rng& rng) {
  return prior.sample(rng);
}

}  // namespace toaloc
