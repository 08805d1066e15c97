#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "beamkit/arch.hpp"
#include "beamkit/autodiff.hpp"
#include "beamkit/types.hpp"

namespace beamkit {

// Complex tensor parameter (re/im are independent reals to the optimizer).
struct CTensor {
  ad::Mat re, im;
};

// Per-feature batch norm applied independently to the real and imaginary
// parts. Running statistics use momentum 0.1; normalization epsilon 1e-5.
struct BatchNormParams {
  ad::Mat scale_re, shift_re, scale_im, shift_im;          // learned, 1 x F
  ad::Mat run_mean_re, run_var_re, run_mean_im, run_var_im;  // stats, 1 x F
  void init(int dim);
};

struct CgalHeadParams {
  CTensor a;             // head_dim x 1 attention vector
  CTensor ws, wn, wm;    // in_dim x head_dim
};

struct CgalLayerParams {
  std::vector<CgalHeadParams> heads;
  CTensor residual_proj;  // in_dim x (head_dim*heads); only when residual
  BatchNormParams bn;     // only when cbn
};

struct CfclLayerParams {
  ad::Mat w;           // in_dim x out_dim, real
  BatchNormParams bn;  // only when cbn
};

struct GnnParams {
  ArchSpec arch;
  std::vector<CgalLayerParams> cgal;
  std::vector<CfclLayerParams> trunk;
  ad::Mat mmse_head_w;  // head_in x 1
  ad::Mat hzm_head_w;   // head_in x 2
  std::string metadata_json = "{}";
};

// Glorot-style init; complex tensors draw re and im with halved variance so
// the complex variance matches the real rule.
GnnParams init_params(const ArchSpec& arch, std::uint64_t seed);

// Visits every tensor (parameters and batch-norm running stats) in a fixed
// order. `im` is null for real tensors; `is_param` is false for stats.
using TensorVisitor = std::function<void(const std::string& name, ad::Mat& re,
                                         ad::Mat* im, bool is_param)>;
void for_each_tensor(GnnParams& params, const TensorVisitor& visit);

// Bit-exact f64 checkpoint (arch + tensors + metadata, CRC-guarded).
void save_params(const GnnParams& params, const std::string& path);
GnnParams load_params(const std::string& path);

enum class ForwardMode : std::uint8_t { MmseOnly, HzmOnly, Select };

struct SchemeOutput {
  RVector p_raw;      // |Re(.)| head outputs before the power projection
  RVector powers;     // after the budget projection
  RVector alpha_raw;  // HZM only
  RVector alphas;     // HZM only
  BeamSolution beams;
  PerfReport perf;
};

struct ForwardOutput {
  std::optional<SchemeOutput> mmse, hzm;
  Scheme selected = Scheme::MMSE;
  bool selected_feasible = false;

  const SchemeOutput& selected_output() const;
};

// The feasibility-gated argmax: a feasible scheme always beats an infeasible
// one; among feasible (or among infeasible) the larger EE wins; EE gaps
// within 1e-12 resolve to MMSE.
struct SelectionResult {
  Scheme scheme;
  bool feasible;
};
SelectionResult select_scheme(bool mmse_feasible, double mmse_ee,
                              bool hzm_feasible, double hzm_ee);

// Differentiable forward passes bound to one tape. Binds every parameter
// tensor as a leaf; the view accessors expose tensors and their gradients in
// one consistent order for the optimizer.
class GnnGraph {
 public:
  GnnGraph(ad::Tape& tape, GnnParams& params, bool training);

  struct SchemeVars {
    ad::Var p_raw;      // K x 1
    ad::Var powers;     // K x 1
    ad::Var alpha_raw;  // HZM only (invalid Var otherwise)
    ad::Var alphas;     // HZM only
    ad::Var rates;      // K x 1
    ad::Var ee;         // 1 x 1
  };

  SchemeVars scheme_forward(const ChannelSet& channels,
                            const SystemConfig& cfg, Scheme scheme);

  // Batched forward with one trunk pass over the row-concatenated batch
  // (required for batch-norm statistics to span the batch). All samples
  // must share one K.
  std::vector<SchemeVars> scheme_forward_batch(
      const std::vector<const ChannelSet*>& batch, const SystemConfig& cfg,
      Scheme scheme);

  // Flattened real arrays (complex tensors contribute re and im entries),
  // aligned index-for-index with grad_views().
  std::vector<ad::Mat*> param_views();
  std::vector<const ad::Mat*> grad_views() const;

  // Attention matrices recorded during the last forward (row-stochastic,
  // one per CGAL layer/head); used by invariants and tests.
  const std::vector<RMatrix>& last_attention() const {
    return last_attention_;
  }

 private:
  struct BoundHead {
    ad::Var a, ws, wn, wm;
  };
  struct BoundCgal {
    std::vector<BoundHead> heads;
    ad::Var residual_proj;
    ad::Var bn_scale_re, bn_shift_re, bn_scale_im, bn_shift_im;
  };
  struct BoundCfcl {
    ad::Var w;
    ad::Var bn_scale_re, bn_shift_re, bn_scale_im, bn_shift_im;
  };

  ad::Var apply_cbn(ad::Var x, BatchNormParams& stats, ad::Var scale_re,
                    ad::Var shift_re, ad::Var scale_im, ad::Var shift_im);
  ad::Var cgal_layer(std::size_t l, ad::Var x);
  ad::Var cfcl_linear(ad::Var x, ad::Var w);
  ad::Var trunk_forward(ad::Var x);
  ad::Var node_features(const ChannelSet& channels);
  SchemeVars head_and_metrics(ad::Var feats, const ChannelSet& channels,
                              const SystemConfig& cfg, Scheme scheme);

  ad::Tape& tape_;
  GnnParams& params_;
  bool training_;
  std::vector<BoundCgal> cgal_;
  std::vector<BoundCfcl> trunk_;
  ad::Var mmse_w_, hzm_w_;
  std::vector<ad::Mat*> param_view_;
  std::vector<ad::Var> param_var_;   // leaf per complex/real tensor
  std::vector<bool> param_is_im_;    // which view half of the leaf
  std::vector<RMatrix> last_attention_;
};

// Full pipeline on one sample: trunk, heads, activations, beam recovery and
// Eq.-(20)-style selection. Works for any K in GNN mode.
ForwardOutput full_forward(const ChannelSet& channels, const SystemConfig& cfg,
                           const GnnParams& params, ForwardMode mode);

// CFCL-only baseline on flattened CSI; rejects K != arch.mlp_k.
ForwardOutput mlp_forward(const ChannelSet& channels, const SystemConfig& cfg,
                          const GnnParams& params);

}  // namespace beamkit
