#pragma once

#include "beamkit/types.hpp"

namespace beamkit {

// Achievable rate of user k:
//   log2(1 + |h_k^H w_k|^2 / (sum_{i != k} |h_k^H w_i|^2 + sigma_k^2)).
double rate_k(const ChannelSet& channels, const BeamSolution& beams,
              const SystemConfig& cfg, int k);

// All K rates at once (single pass over the K x K coupling matrix).
RVector rates(const ChannelSet& channels, const BeamSolution& beams,
              const SystemConfig& cfg);

// sum_k ||w_k||^2 + P_C.
double total_power(const BeamSolution& beams, const SystemConfig& cfg);

// sum_k R_k / P_Total.
double energy_efficiency(const ChannelSet& channels, const BeamSolution& beams,
                         const SystemConfig& cfg);

// Rates, power, EE and the QoS/budget verdicts in one report.
PerfReport check_feasibility(const ChannelSet& channels,
                             const BeamSolution& beams,
                             const SystemConfig& cfg,
                             double rate_tol = kRateTol);

}  // namespace beamkit
