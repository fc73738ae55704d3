// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/geometry.hpp"
#include "toaloc/nlos_prior.hpp"
#include "toaloc/rng.hpp"

#include <cstdint>
#include <map>
#include <optional>

namespace toaloc {

/// Generative error model for ToA measurements. All quantities in meters.
struct ErrorModel {
  // Combined clock, thermal and synchronization noise std. Zero disables it.
  double sigma_clk = 20.0;
  double quant_step = 9.77;  // 32.56 ns in LTE
  bool quant_enabled = false;
  std::optional<NlosPrior> nlos;  // nullopt: no random NLOS bias
  bool frozen_nlos = true;        // one bias draw per (AP, device location)
  double sigma_dT = 0.0;          // std of per-AP calibration delay
  double sigma_dx = 0.0;          // std of each AP position-offset coordinate
  double p_hear = 1.0;            // per non-reference AP detection probability
  std::optional<int> max_heard;   // keep the nearest APs when more are heard
  std::map<int, double> fixed_bias;  // deterministic extra bias per AP id

  // Per-term noise instead of the combined sigma_clk.
  bool explicit_terms = false;
  double sigma_thermal = 0.0;  // n_ji, fresh per observation
  double sigma_sync = 0.0;     // s_j, fresh per AP per epoch
};

/// Returns the first violated invariant, or nullopt.
std::optional<std::string> check_error_model(const ErrorModel& model);

/// Round to the nearest multiple of `step`, ties to even. step = 0 is the
/// identity.
double quantize(double toa, double step);

/// Draw the calibration delay and position offset of every AP. The reference
/// AP (index 0) keeps a zero calibration delay.
void realize_ap_errors(std::vector<AccessPoint>& aps, const ErrorModel& model, Rng& rng);

/// Deterministic frozen NLOS biases: the draw for (AP, device location) is a
/// function of the seed only, so it is reused every time the device revisits
/// that location.
class FrozenNlos {
public:
  explicit FrozenNlos(std::uint64_t seed) : seed_(seed) {}
  double bias(const NlosPrior& prior, int ap_id, std::size_t location) const;

private:
  std::uint64_t seed_;
};

/// Simulate one epoch for the device at `device_index`. Uses `frozen` for the
/// NLOS draws when the model asks for frozen biases and `frozen` is given;
/// otherwise draws fresh biases from `rng`.
ToaEpoch simulate_epoch(const Scenario& scenario, std::size_t device_index, const ErrorModel& model, Rng& rng,
                        const FrozenNlos* frozen = nullptr, int epoch_id = -1);

}  // namespace toaloc
