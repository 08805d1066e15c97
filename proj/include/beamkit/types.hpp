#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Absolute slack allowed on the transmit power budget.
inline constexpr double kPowerTol = 1e-9;
// Default slack on per-user rate floors when checking feasibility.
inline constexpr double kRateTol = 1e-6;

// Transmitter-side constants: power budget, circuit power, per-user noise
// powers and rate floors.
struct SystemConfig {
  double p_max = 1.0;      // watts
  double p_circuit = 0.5;  // watts
  RVector noise_powers;    // sigma_k^2, watts, length K
  RVector rate_floors;     // xi_k, bit/s/Hz, length K

  int k_users() const { return static_cast<int>(noise_powers.size()); }

  void validate() const {
    if (!(p_max > 0)) throw InvalidInputError("p_max must be > 0");
    if (p_circuit < 0) throw InvalidInputError("p_circuit must be >= 0");
    if (noise_powers.size() != rate_floors.size())
      throw InvalidInputError("noise_powers/rate_floors length mismatch");
    for (Eigen::Index k = 0; k < noise_powers.size(); ++k) {
      if (!(noise_powers[k] > 0))
        throw InvalidInputError("every noise power must be > 0");
      if (rate_floors[k] < 0)
        throw InvalidInputError("rate floors must be >= 0");
    }
  }

  // Common constructor for the equal-noise, equal-floor case.
  static SystemConfig uniform(int k_users, double p_max, double p_circuit,
                              double sigma2, double xi) {
    SystemConfig cfg;
    cfg.p_max = p_max;
    cfg.p_circuit = p_circuit;
    cfg.noise_powers = RVector::Constant(k_users, sigma2);
    cfg.rate_floors = RVector::Constant(k_users, xi);
    cfg.validate();
    return cfg;
  }
};

// One sample of CSI. Row k of `h` is the channel vector h_k; inner products
// with beams are always computed as conj(h_k) . w_i.
struct ChannelSet {
  CMatrix h;  // K x N_T

  int k_users() const { return static_cast<int>(h.rows()); }
  int n_antennas() const { return static_cast<int>(h.cols()); }

  void validate() const {
    if (h.rows() < 1 || h.cols() < 1)
      throw InvalidInputError("channel matrix must be at least 1x1");
    if (!h.allFinite())
      throw InvalidInputError("channel matrix has non-finite entries");
  }
};

enum class Scheme : std::uint8_t { MMSE, HZM, RAW };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::MMSE: return "mmse";
    case Scheme::HZM: return "hzm";
    case Scheme::RAW: return "raw";
  }
  return "?";
}

// Beamforming vectors together with the (p, alpha, scheme) parameterization
// that produced them. For RAW solutions powers are ||w_k||^2.
struct BeamSolution {
  CMatrix w;        // K x N_T, row k = w_k
  RVector powers;   // p_k >= 0
  RVector alphas;   // only meaningful for HZM; empty otherwise
  Scheme scheme = Scheme::RAW;

  int k_users() const { return static_cast<int>(w.rows()); }

  static BeamSolution raw(CMatrix beams) {
    BeamSolution s;
    s.w = std::move(beams);
    s.powers = s.w.rowwise().squaredNorm().real();
    s.scheme = Scheme::RAW;
    return s;
  }
};

// Performance of one beam solution on one channel sample.
struct PerfReport {
  RVector rates;             // bit/s/Hz per user
  double total_power = 0.0;  // watts
  double ee = 0.0;           // bit/s/Hz/W
  std::vector<bool> qos_ok;  // per user
  bool feasible = false;
};

}  // namespace beamkit
