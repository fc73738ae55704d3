// SPDX-License-Identifier: Apache-2.0
#include "toaloc/simulator.hpp"

#include "toaloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace toaloc {

std::optional<std::string> check_error_model(const ErrorModel& m) {
  if (!(m.sigma_clk >= 0.0) || !std::isfinite(m.sigma_clk)) return "sigma_clk must be >= 0";
  if (!(m.quant_step >= 0.0) || !std::isfinite(m.quant_step)) return "quant_step must be >= 0";
  if (!(m.p_hear > 0.0 && m.p_hear <= 1.0)) return "p_hear must lie in (0, 1]";
  if (!(m.sigma_dT >= 0.0)) return "sigma_dT must be >= 0";
  if (!(m.sigma_dx >= 0.0)) return "sigma_dx must be >= 0";
  if (m.max_heard && *m.max_heard < 2) return "max_heard must be >= 2";
  if (!(m.sigma_thermal >= 0.0) || !(m.sigma_sync >= 0.0)) return "per-term noise std must be >= 0";
  for (const auto& [id, bias] : m.fixed_bias)
    if (!(bias >= 0.0) || !std::isfinite(bias)) return "fixed_bias for AP " + std::to_string(id) + " must be finite and >= 0";
  return std::nullopt;
}

double quantize(double toa, double step) {
  if (step <= 0.0) return toa;
  return step * std::nearbyint(toa / step);
}

void realize_ap_errors(std::vector<AccessPoint>& aps, const ErrorModel& model, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t j = 0; j < aps.size(); ++j) {
    AccessPoint& ap = aps[j];
    const double delay = model.sigma_dT * gauss(rng);
    ap.true_cal_delay = j == 0 ? 0.0 : delay;
    Vector offset(ap.position.dimension());
    for (Eigen::Index k = 0; k < offset.size(); ++k) offset[k] = model.sigma_dx * gauss(rng);
    ap.true_position_offset = Point(std::move(offset));
  }
}

double FrozenNlos::bias(const NlosPrior& prior, int ap_id, std::size_t location) const {
  Rng rng = make_rng(seed_, {0x6e6c6f73ULL, static_cast<std::uint64_t>(static_cast<std::uint32_t>(ap_id)), location});
  return prior.sample(rng);
}

ToaEpoch simulate_epoch(const Scenario& scenario, std::size_t device_index, const ErrorModel& model, Rng& rng,
                        const FrozenNlos* frozen, int epoch_id) {
  if (device_index >= scenario.device_positions.size())
    throw invalid_argument("simulate_epoch: device index " + std::to_string(device_index) + " out of range (" +
                           std::to_string(scenario.device_positions.size()) + " positions)");
  if (scenario.aps.size() < 2) throw invalid_argument("simulate_epoch: need at least 2 APs");
  if (auto bad = check_error_model(model)) throw invalid_argument("error model: " + *bad);

  const Point& device = scenario.device_positions[device_index];
  const std::size_t n_aps = scenario.aps.size();

  std::vector<double> range(n_aps);
  for (std::size_t j = 0; j < n_aps; ++j) range[j] = distance(device, scenario.aps[j].true_position());

  // Hearability mask. The reference AP is always heard and at least one
  // other AP must be, otherwise the mask is redrawn.
  std::vector<char> heard(n_aps, 0);
  std::bernoulli_distribution hear(model.p_hear);
  for (;;) {
    heard[0] = 1;
    std::size_t count = 1;
    for (std::size_t j = 1; j < n_aps; ++j) {
      heard[j] = hear(rng) ? 1 : 0;
      count += heard[j];
    }
    if (count >= 2) break;
  }
  if (model.max_heard) {
    std::vector<std::size_t> order;
    for (std::size_t j = 1; j < n_aps; ++j)
      if (heard[j]) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return range[a] < range[b]; });
    const std::size_t keep = static_cast<std::size_t>(*model.max_heard) - 1;
    for (std::size_t k = keep; k < order.size(); ++k) heard[order[k]] = 0;
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> raw(n_aps, 0.0);
  for (std::size_t j = 0; j < n_aps; ++j) {
    if (!heard[j]) continue;
    const AccessPoint& ap = scenario.aps[j];

    double noise = 0.0;
    if (model.explicit_terms) {
      noise = model.sigma_sync * gauss(rng) + model.sigma_thermal * gauss(rng);
    } else {
      noise = model.sigma_clk * gauss(rng);
    }

    double gamma = 0.0;
    if (model.nlos) {
      gamma = (model.frozen_nlos && frozen != nullptr) ? frozen->bias(*model.nlos, ap.id, device_index)
                                                       : model.nlos->sample(rng);
    }
    if (auto it = model.fixed_bias.find(ap.id); it != model.fixed_bias.end()) gamma += it->second;

    raw[j] = range[j] + gamma + ap.true_cal_delay + noise;
  }

  const double step = model.quant_enabled ? model.quant_step : 0.0;
  const double reference = quantize(raw[0], step);

  ToaEpoch epoch;
  epoch.epoch_id = epoch_id >= 0 ? epoch_id : static_cast<int>(device_index);
  epoch.reference_ap = scenario.aps[0].id;
  for (std::size_t j = 0; j < n_aps; ++j) {
    if (!heard[j]) continue;
    const double toa = j == 0 ? 0.0 : quantize(raw[j], step) - reference;
    epoch.observations.push_back({scenario.aps[j].id, toa});
  }
  return epoch;
}

}  // namespace toaloc
