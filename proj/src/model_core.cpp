#include "beamkit/model_core.hpp"

#include <cmath>

namespace beamkit {

namespace {

void check_inputs(const ChannelSet& channels, const BeamSolution& beams,
                  const SystemConfig& cfg) {
  channels.validate();
  if (!beams.w.allFinite())
    throw InvalidInputError("beam matrix has non-finite entries");
  if (beams.w.rows() != channels.h.rows() ||
      beams.w.cols() != channels.h.cols())
    throw InvalidInputError("beam/channel dimension mismatch");
  if (cfg.noise_powers.size() != channels.h.rows())
    throw InvalidInputError("config is for a different user count");
}

// coupling(k, i) = |h_k^H w_i|^2
RMatrix coupling_matrix(const ChannelSet& channels, const BeamSolution& beams) {
  CMatrix z = channels.h.conjugate() * beams.w.transpose();
  return z.cwiseAbs2();
}

RVector rates_from_coupling(const RMatrix& c, const SystemConfig& cfg) {
  const Eigen::Index k_users = c.rows();
  RVector r(k_users);
  for (Eigen::Index k = 0; k < k_users; ++k) {
    const double signal = c(k, k);
    const double interference = c.row(k).sum() - signal;
    r[k] = std::log2(1.0 + signal / (interference + cfg.noise_powers[k]));
  }
  return r;
}

}  // namespace

double rate_k(const ChannelSet& channels, const BeamSolution& beams,
              const SystemConfig& cfg, int k) {
  check_inputs(channels, beams, cfg);
  if (k < 0 || k >= channels.k_users())
    throw InvalidInputError("user index out of range");
  double signal = 0.0, interference = 0.0;
  for (int i = 0; i < channels.k_users(); ++i) {
    // Eigen's dot conjugates its first argument, so this is conj(h_k) . w_i.
    const double p = std::norm(channels.h.row(k).dot(beams.w.row(i)));
    (i == k ? signal : interference) += p;
  }
  return std::log2(1.0 + signal / (interference + cfg.noise_powers[k]));
}

RVector rates(const ChannelSet& channels, const BeamSolution& beams,
              const SystemConfig& cfg) {
  check_inputs(channels, beams, cfg);
  return rates_from_coupling(coupling_matrix(channels, beams), cfg);
}

double total_power(const BeamSolution& beams, const SystemConfig& cfg) {
  return beams.w.squaredNorm() + cfg.p_circuit;
}

double energy_efficiency(const ChannelSet& channels, const BeamSolution& beams,
                         const SystemConfig& cfg) {
  const double p = total_power(beams, cfg);
  if (!(p > 0))
    throw NumericError("total power is zero; EE undefined");
  return rates(channels, beams, cfg).sum() / p;
}

PerfReport check_feasibility(const ChannelSet& channels,
                             const BeamSolution& beams,
                             const SystemConfig& cfg, double rate_tol) {
  if (rate_tol < 0) throw InvalidInputError("rate_tol must be >= 0");
  PerfReport report;
  report.rates = rates(channels, beams, cfg);
  report.total_power = total_power(beams, cfg);
  report.ee = report.total_power > 0 ? report.rates.sum() / report.total_power
                                     : 0.0;
  report.qos_ok.resize(channels.k_users());
  bool all_ok = true;
  for (int k = 0; k < channels.k_users(); ++k) {
    report.qos_ok[k] = report.rates[k] >= cfg.rate_floors[k] - rate_tol;
    all_ok = all_ok && report.qos_ok[k];
  }
  const double tx_power = beams.w.squaredNorm();
  report.feasible = all_ok && tx_power <= cfg.p_max + kPowerTol;
  return report;
}

}  // namespace beamkit
