#include "beamkit/precoders.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace beamkit {

namespace {

// Gram of the conjugate-transpose CSI matrix: M(i,j) = h_i^H h_j.
CMatrix channel_gram(const ChannelSet& channels) {
  return channels.h.conjugate() * channels.h.transpose();
}

double condition_estimate(const CMatrix& m) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

CMatrix normalize_rows(CMatrix m) {
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    const double n = m.row(k).norm();
    if (n < 1e-12)
      throw InvalidInputError("degenerate (near-zero) direction row");
    m.row(k) /= n;
  }
  return m;
}

}  // namespace

const char* dir_scheme_name(DirScheme s) {
  switch (s) {
    case DirScheme::MMSE: return "mmse";
    case DirScheme::ZF: return "zf";
    case DirScheme::MRT: return "mrt";
    case DirScheme::HZM: return "hzm";
  }
  return "?";
}

DirectionSet mmse_directions(const ChannelSet& channels,
                             const SystemConfig& cfg) {
  channels.validate();
  if (cfg.noise_powers.size() != channels.k_users())
    throw InvalidInputError("config is for a different user count");
  CMatrix m = channel_gram(channels);
  m.diagonal() += cfg.noise_powers.cast<Complex>();
  if (condition_estimate(m) > 1e14)
    throw NumericError("regularized Gram is numerically singular");
  // V = G^H M^{-1}; directions are the normalized columns of V, i.e. the
  // rows of M^{-T} G^* ... computed as a K x K solve, never an N_T inverse.
  const CMatrix y = m.llt().solve(CMatrix::Identity(m.rows(), m.cols()));
  DirectionSet out;
  out.dirs = normalize_rows(y.transpose() * channels.h);
  out.scheme = DirScheme::MMSE;
  return out;
}

DirectionSet zf_directions(const ChannelSet& channels) {
  channels.validate();
  if (channels.k_users() > channels.n_antennas())
    throw NumericError("zero-forcing needs K <= N_T");
  const CMatrix m = channel_gram(channels);
  if (condition_estimate(m) > 1e12)
    throw NumericError("channel Gram is rank deficient");
  const CMatrix y = m.llt().solve(CMatrix::Identity(m.rows(), m.cols()));
  DirectionSet out;
  out.dirs = normalize_rows(y.transpose() * channels.h);
  out.scheme = DirScheme::ZF;
  return out;
}

DirectionSet mrt_directions(const ChannelSet& channels) {
  channels.validate();
  for (int k = 0; k < channels.k_users(); ++k)
    if (channels.h.row(k).norm() == 0.0)
      throw InvalidInputError("zero channel vector; MRT undefined");
  DirectionSet out;
  out.dirs = normalize_rows(channels.h);
  out.scheme = DirScheme::MRT;
  return out;
}

DirectionSet hzm_directions(const ChannelSet& channels,
                            const RVector& alphas) {
  if (alphas.size() != channels.k_users())
    throw InvalidInputError("alpha count does not match user count");
  for (Eigen::Index k = 0; k < alphas.size(); ++k)
    if (!(alphas[k] >= 0.0 && alphas[k] <= 1.0))
      throw InvalidInputError("alpha must lie in [0, 1]");
  const DirectionSet zf = zf_directions(channels);
  const DirectionSet mrt = mrt_directions(channels);
  CMatrix mix(channels.k_users(), channels.n_antennas());
  for (int k = 0; k < channels.k_users(); ++k)
    mix.row(k) =
        alphas[k] * zf.dirs.row(k) + (1.0 - alphas[k]) * mrt.dirs.row(k);
  for (int k = 0; k < channels.k_users(); ++k)
    if (mix.row(k).norm() < 1e-12)
      throw NumericError("ZF/MRT combination cancels; HZM degenerate");
  DirectionSet out;
  out.dirs = normalize_rows(std::move(mix));
  out.scheme = DirScheme::HZM;
  out.alphas = alphas;
  return out;
}

BeamSolution recover_beams(const DirectionSet& dirs, const RVector& powers) {
  if (powers.size() != dirs.k_users())
    throw InvalidInputError("power count does not match user count");
  for (Eigen::Index k = 0; k < powers.size(); ++k)
    if (!(powers[k] >= 0.0))
      throw InvalidInputError("powers must be >= 0");
  BeamSolution out;
  out.w = dirs.dirs;
  for (Eigen::Index k = 0; k < powers.size(); ++k)
    out.w.row(k) *= std::sqrt(powers[k]);
  out.powers = powers;
  switch (dirs.scheme) {
    case DirScheme::MMSE:
      out.scheme = Scheme::MMSE;
      break;
    case DirScheme::HZM:
      out.scheme = Scheme::HZM;
      out.alphas = dirs.alphas;
      break;
    case DirScheme::ZF:
      out.scheme = Scheme::HZM;
      out.alphas = RVector::Ones(dirs.k_users());
      break;
    case DirScheme::MRT:
      out.scheme = Scheme::HZM;
      out.alphas = RVector::Zero(dirs.k_users());
      break;
  }
  return out;
}

}  // namespace beamkit
