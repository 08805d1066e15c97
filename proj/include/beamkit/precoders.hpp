#pragma once

#include "beamkit/types.hpp"

namespace beamkit {

enum class DirScheme : std::uint8_t { MMSE, ZF, MRT, HZM };

const char* dir_scheme_name(DirScheme s);

// Unit-norm beam directions, one per user (row k). HZM carries the mixing
// coefficients that produced it.
struct DirectionSet {
  CMatrix dirs;  // K x N_T, rows unit-norm
  DirScheme scheme = DirScheme::MMSE;
  RVector alphas;  // HZM only

  int k_users() const { return static_cast<int>(dirs.rows()); }
};

// Rows of V = G^H (G G^H + diag(sigma^2))^{-1}, normalized. With equal noise
// powers this is exactly the regularized channel Gram inverse; unequal noise
// uses the per-user diagonal.
DirectionSet mmse_directions(const ChannelSet& channels,
                             const SystemConfig& cfg);

// Rows of U = G^H (G G^H)^{-1}, normalized. Requires K <= N_T and a
// well-conditioned Gram.
DirectionSet zf_directions(const ChannelSet& channels);

// Matched filter: row k = h_k / ||h_k||.
DirectionSet mrt_directions(const ChannelSet& channels);

// Per-user convex combination of the unit ZF and unit MRT directions,
// renormalized. alpha_k = 1 is ZF, alpha_k = 0 is MRT.
DirectionSet hzm_directions(const ChannelSet& channels, const RVector& alphas);

// w_k = sqrt(p_k) * dir_k.
BeamSolution recover_beams(const DirectionSet& dirs, const RVector& powers);

}  // namespace beamkit
