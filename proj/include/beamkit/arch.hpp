#pragma once

#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

// One complex graph attention layer: multi-head attention over the user
// graph; output feature dim is head_dim * heads.
struct CgalLayerSpec {
  int in_dim = 0;
  int head_dim = 0;  // per-head output dim
  int heads = 1;
  bool crelu = true;  // output activation after the head concat
  bool cbn = false;   // complex batch norm after the concat, before crelu
};

// One complex fully-connected layer (real weight; (1+j)-structured map).
struct CfclLayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  bool crelu = true;
  bool cbn = false;
};

enum class TrunkKind : std::uint8_t { GNN, MLP };

// Network shape. The per-scheme output layers (head_in_dim -> M_n, no
// activation) are implied: M_n = 1 for MMSE and 2 for HZM.
struct ArchSpec {
  TrunkKind trunk = TrunkKind::GNN;
  std::vector<CgalLayerSpec> cgal;        // GNN trunk
  std::vector<CfclLayerSpec> cfcl_trunk;  // shared CFCL stack
  int head_in_dim = 0;                    // input dim of the scheme heads
  bool residual = false;                  // learned-projection residual add
  // alpha = 1/(1+exp(x)) exactly as printed; false uses 1/(1+exp(-x)).
  bool sigmoid_as_printed = true;
  int mlp_k = 0;  // MLP trunk binds to this fixed user count
  // Which scheme heads the network carries: "both", "mmse" (M_n = 1 only)
  // or "hzm" (M_n = 2 only). Training/eval modes must be compatible.
  std::string schemes = "both";

  bool has_mmse_head() const { return schemes != "hzm"; }
  bool has_hzm_head() const { return schemes != "mmse"; }

  int input_dim() const;  // N_T (GNN) or K*N_T (MLP)
  void validate() const;

  std::string to_json() const;
  static ArchSpec from_json(const std::string& text);

  // Proportionally shrunk default for desk-scale runs.
  static ArchSpec desk_default(int n_antennas);
  // The full-scale layout (CGAL 64x20, CGAL 512x20, CFCL 512/128/M_n).
  static ArchSpec paper_scale(int n_antennas);
  // CFCL-only baseline on flattened CSI; fixed K.
  static ArchSpec mlp_default(int n_antennas, int k_users);
};

}  // namespace beamkit
