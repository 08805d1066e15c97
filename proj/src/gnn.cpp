#include "beamkit/gnn.hpp"

#include <cmath>
#include <unordered_map>

#include "beamkit/binio.hpp"
#include "beamkit/crc64.hpp"
#include "beamkit/io_util.hpp"
#include "beamkit/model_core.hpp"
#include "beamkit/precoders.hpp"
#include "beamkit/rng.hpp"

namespace beamkit {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kLeakySlope = 0.01;
constexpr double kSelectTie = 1e-12;

ad::Mat uniform_mat(Philox& rng, int rows, int cols, double limit) {
  ad::Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.next_uniform(-limit, limit);
  return m;
}

// Complex Glorot: re and im each uniform with half the real-rule variance.
CTensor glorot_complex(Philox& rng, int rows, int cols, int fan_in,
                       int fan_out) {
  const double limit =
      std::sqrt(6.0 / (fan_in + fan_out)) / std::sqrt(2.0);
  CTensor t;
  t.re = uniform_mat(rng, rows, cols, limit);
  t.im = uniform_mat(rng, rows, cols, limit);
  return t;
}

ad::Mat glorot_real(Philox& rng, int rows, int cols, int fan_in,
                    int fan_out) {
  return uniform_mat(rng, rows, cols, std::sqrt(6.0 / (fan_in + fan_out)));
}

}  // namespace

void BatchNormParams::init(int dim) {
  scale_re = ad::Mat::Ones(1, dim);
  shift_re = ad::Mat::Zero(1, dim);
  scale_im = ad::Mat::Ones(1, dim);
  shift_im = ad::Mat::Zero(1, dim);
  run_mean_re = ad::Mat::Zero(1, dim);
  run_var_re = ad::Mat::Ones(1, dim);
  run_mean_im = ad::Mat::Zero(1, dim);
  run_var_im = ad::Mat::Ones(1, dim);
}

GnnParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  GnnParams p;
  p.arch = arch;
  std::uint64_t ordinal = 0;
  auto stream = [&] { return Philox(Philox::split(seed, ordinal++)); };

  for (const auto& spec : arch.cgal) {
    CgalLayerParams layer;
    const int out_dim = spec.head_dim * spec.heads;
    for (int d = 0; d < spec.heads; ++d) {
      CgalHeadParams h;
      Philox ra = stream();
      h.a = glorot_complex(ra, spec.head_dim, 1, spec.head_dim, 1);
      Philox rs = stream();
      h.ws = glorot_complex(rs, spec.in_dim, spec.head_dim, spec.in_dim,
                            spec.head_dim);
      Philox rn = stream();
      h.wn = glorot_complex(rn, spec.in_dim, spec.head_dim, spec.in_dim,
                            spec.head_dim);
      Philox rm = stream();
      h.wm = glorot_complex(rm, spec.in_dim, spec.head_dim, spec.in_dim,
                            spec.head_dim);
      layer.heads.push_back(std::move(h));
    }
    if (arch.residual) {
      Philox rr = stream();
      layer.residual_proj =
          glorot_complex(rr, spec.in_dim, out_dim, spec.in_dim, out_dim);
    }
    if (spec.cbn) layer.bn.init(out_dim);
    p.cgal.push_back(std::move(layer));
  }
  for (const auto& spec : arch.cfcl_trunk) {
    CfclLayerParams layer;
    Philox rw = stream();
    layer.w =
        glorot_real(rw, spec.in_dim, spec.out_dim, spec.in_dim, spec.out_dim);
    if (spec.cbn) layer.bn.init(spec.out_dim);
    p.trunk.push_back(std::move(layer));
  }
  Philox rm = stream();
  p.mmse_head_w = glorot_real(rm, arch.head_in_dim, 1, arch.head_in_dim, 1);
  Philox rh = stream();
  p.hzm_head_w = glorot_real(rh, arch.head_in_dim, 2, arch.head_in_dim, 2);
  return p;
}

void for_each_tensor(GnnParams& params, const TensorVisitor& visit) {
  auto visit_bn = [&](const std::string& prefix, BatchNormParams& bn) {
    visit(prefix + ".scale_re", bn.scale_re, nullptr, true);
    visit(prefix + ".shift_re", bn.shift_re, nullptr, true);
    visit(prefix + ".scale_im", bn.scale_im, nullptr, true);
    visit(prefix + ".shift_im", bn.shift_im, nullptr, true);
    visit(prefix + ".run_mean_re", bn.run_mean_re, nullptr, false);
    visit(prefix + ".run_var_re", bn.run_var_re, nullptr, false);
    visit(prefix + ".run_mean_im", bn.run_mean_im, nullptr, false);
    visit(prefix + ".run_var_im", bn.run_var_im, nullptr, false);
  };
  for (std::size_t l = 0; l < params.cgal.size(); ++l) {
    const std::string lp = "cgal" + std::to_string(l);
    auto& layer = params.cgal[l];
    for (std::size_t d = 0; d < layer.heads.size(); ++d) {
      const std::string hp = lp + ".h" + std::to_string(d);
      auto& h = layer.heads[d];
      visit(hp + ".a", h.a.re, &h.a.im, true);
      visit(hp + ".ws", h.ws.re, &h.ws.im, true);
      visit(hp + ".wn", h.wn.re, &h.wn.im, true);
      visit(hp + ".wm", h.wm.re, &h.wm.im, true);
    }
    if (params.arch.residual)
      visit(lp + ".res_proj", layer.residual_proj.re, &layer.residual_proj.im,
            true);
    if (params.arch.cgal[l].cbn) visit_bn(lp + ".bn", layer.bn);
  }
  for (std::size_t t = 0; t < params.trunk.size(); ++t) {
    const std::string tp = "trunk" + std::to_string(t);
    visit(tp + ".w", params.trunk[t].w, nullptr, true);
    if (params.arch.cfcl_trunk[t].cbn) visit_bn(tp + ".bn", params.trunk[t].bn);
  }
  visit("head.mmse.w", params.mmse_head_w, nullptr, true);
  visit("head.hzm.w", params.hzm_head_w, nullptr, true);
}

// ---- checkpoint ----------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'B', 'K', 'C', 'P'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_params(const GnnParams& params, const std::string& path) {
  BinWriter w;
  w.put_raw(kCkptMagic, 4);
  w.put<std::uint32_t>(kCkptVersion);
  w.put_string(params.arch.to_json());
  w.put_string(params.metadata_json);
  std::uint32_t count = 0;
  for_each_tensor(const_cast<GnnParams&>(params),
                  [&](const std::string&, ad::Mat&, ad::Mat*, bool) {
                    ++count;
                  });
  w.put<std::uint32_t>(count);
  for_each_tensor(
      const_cast<GnnParams&>(params),
      [&](const std::string& name, ad::Mat& re, ad::Mat* im, bool) {
        w.put_string(name);
        w.put<std::uint8_t>(im ? 1 : 0);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(re.rows()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(re.cols()));
        for (Eigen::Index r = 0; r < re.rows(); ++r)
          for (Eigen::Index c = 0; c < re.cols(); ++c) w.put<double>(re(r, c));
        if (im)
          for (Eigen::Index r = 0; r < im->rows(); ++r)
            for (Eigen::Index c = 0; c < im->cols(); ++c)
              w.put<double>((*im)(r, c));
      });
  const std::uint64_t crc = crc64(w.bytes.data(), w.bytes.size());
  w.put<std::uint64_t>(crc);
  write_file_atomic(path, w.bytes.data(), w.bytes.size());
}

GnnParams load_params(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 16) throw FormatError("checkpoint too small", 0);
  if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
    throw CheckpointError("bad magic; not a beamkit checkpoint");
  const std::uint64_t stored_crc =
      [&] {
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + bytes.size() - 8, 8);
        return v;
      }();
  if (crc64(bytes.data(), bytes.size() - 8) != stored_crc)
    throw CheckpointError("checkpoint checksum mismatch (truncated?)");
  BinReader r{bytes};
  r.pos = 4;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCkptVersion)
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  const std::string arch_json = r.get_string("arch");
  const std::string metadata = r.get_string("metadata");
  GnnParams params = init_params(ArchSpec::from_json(arch_json), 0);
  params.metadata_json = metadata;
  const auto count = r.get<std::uint32_t>("tensor count");

  struct Incoming {
    bool complex;
    ad::Mat re, im;
  };
  std::unordered_map<std::string, Incoming> incoming;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string("tensor name");
    Incoming t;
    t.complex = r.get<std::uint8_t>("tensor kind") != 0;
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    t.re.resize(rows, cols);
    for (std::uint32_t rr = 0; rr < rows; ++rr)
      for (std::uint32_t cc = 0; cc < cols; ++cc)
        t.re(rr, cc) = r.get<double>("tensor data");
    if (t.complex) {
      t.im.resize(rows, cols);
      for (std::uint32_t rr = 0; rr < rows; ++rr)
        for (std::uint32_t cc = 0; cc < cols; ++cc)
          t.im(rr, cc) = r.get<double>("tensor data");
    }
    incoming.emplace(name, std::move(t));
  }

  std::size_t applied = 0;
  for_each_tensor(params, [&](const std::string& name, ad::Mat& re,
                              ad::Mat* im, bool) {
    auto it = incoming.find(name);
    if (it == incoming.end())
      throw CheckpointError("checkpoint is missing tensor " + name);
    Incoming& t = it->second;
    if (t.complex != (im != nullptr) || t.re.rows() != re.rows() ||
        t.re.cols() != re.cols())
      throw CheckpointError("checkpoint tensor " + name +
                            " does not match the architecture");
    re = t.re;
    if (im) *im = t.im;
    ++applied;
  });
  if (applied != incoming.size())
    throw CheckpointError("checkpoint carries unknown extra tensors");
  return params;
}

// ---- selection -----------------------------------------------------------

SelectionResult select_scheme(bool mmse_feasible, double mmse_ee,
                              bool hzm_feasible, double hzm_ee) {
  if (mmse_feasible != hzm_feasible)
    return {mmse_feasible ? Scheme::MMSE : Scheme::HZM, true};
  // Both feasible or both infeasible: larger EE wins, MMSE takes ties.
  const bool any = mmse_feasible;
  if (std::abs(mmse_ee - hzm_ee) <= kSelectTie) return {Scheme::MMSE, any};
  return {mmse_ee >= hzm_ee ? Scheme::MMSE : Scheme::HZM, any};
}

const SchemeOutput& ForwardOutput::selected_output() const {
  if (selected == Scheme::MMSE && mmse) return *mmse;
  if (selected == Scheme::HZM && hzm) return *hzm;
  throw LifecycleError("selected scheme has no output");
}

// ---- graph ---------------------------------------------------------------

GnnGraph::GnnGraph(ad::Tape& tape, GnnParams& params, bool training)
    : tape_(tape), params_(params), training_(training) {
  params.arch.validate();
  ad::Var pending{};
  auto bind = [&](ad::Mat& re, ad::Mat* im) {
    ad::Var v = im ? tape_.param(re, *im) : tape_.param_real(re);
    param_view_.push_back(&re);
    param_var_.push_back(v);
    param_is_im_.push_back(false);
    if (im) {
      param_view_.push_back(im);
      param_var_.push_back(v);
      param_is_im_.push_back(true);
    }
    return v;
  };

  for (std::size_t l = 0; l < params.cgal.size(); ++l) {
    BoundCgal bound;
    auto& layer = params.cgal[l];
    for (auto& h : layer.heads) {
      BoundHead bh;
      bh.a = bind(h.a.re, &h.a.im);
      bh.ws = bind(h.ws.re, &h.ws.im);
      bh.wn = bind(h.wn.re, &h.wn.im);
      bh.wm = bind(h.wm.re, &h.wm.im);
      bound.heads.push_back(bh);
    }
    if (params.arch.residual)
      bound.residual_proj =
          bind(layer.residual_proj.re, &layer.residual_proj.im);
    if (params.arch.cgal[l].cbn) {
      bound.bn_scale_re = bind(layer.bn.scale_re, nullptr);
      bound.bn_shift_re = bind(layer.bn.shift_re, nullptr);
      bound.bn_scale_im = bind(layer.bn.scale_im, nullptr);
      bound.bn_shift_im = bind(layer.bn.shift_im, nullptr);
    }
    cgal_.push_back(bound);
  }
  for (std::size_t t = 0; t < params.trunk.size(); ++t) {
    BoundCfcl bound;
    bound.w = bind(params.trunk[t].w, nullptr);
    if (params.arch.cfcl_trunk[t].cbn) {
      bound.bn_scale_re = bind(params.trunk[t].bn.scale_re, nullptr);
      bound.bn_shift_re = bind(params.trunk[t].bn.shift_re, nullptr);
      bound.bn_scale_im = bind(params.trunk[t].bn.scale_im, nullptr);
      bound.bn_shift_im = bind(params.trunk[t].bn.shift_im, nullptr);
    }
    trunk_.push_back(bound);
  }
  mmse_w_ = bind(params.mmse_head_w, nullptr);
  hzm_w_ = bind(params.hzm_head_w, nullptr);
  (void)pending;
}

std::vector<ad::Mat*> GnnGraph::param_views() { return param_view_; }

std::vector<const ad::Mat*> GnnGraph::grad_views() const {
  std::vector<const ad::Mat*> out;
  out.reserve(param_var_.size());
  for (std::size_t i = 0; i < param_var_.size(); ++i)
    out.push_back(param_is_im_[i] ? &tape_.grad_im(param_var_[i])
                                  : &tape_.grad_re(param_var_[i]));
  return out;
}

ad::Var GnnGraph::apply_cbn(ad::Var x, BatchNormParams& stats,
                            ad::Var scale_re, ad::Var shift_re,
                            ad::Var scale_im, ad::Var shift_im) {
  auto normalize = [&](ad::Var part, ad::Mat& run_mean, ad::Mat& run_var,
                       ad::Var scale, ad::Var shift) {
    ad::Var xn;
    if (training_) {
      ad::Var mean = tape_.col_mean(part);
      ad::Var centered = tape_.sub_rowvec(part, mean);
      ad::Var var = tape_.col_mean(tape_.abs2(centered));
      run_mean = (1.0 - kBnMomentum) * run_mean + kBnMomentum * tape_.re(mean);
      run_var = (1.0 - kBnMomentum) * run_var + kBnMomentum * tape_.re(var);
      ad::Var std = tape_.sqrt_op(tape_.axpb(var, 1.0, kBnEps));
      xn = tape_.div_rowvec(centered, std);
    } else {
      ad::Var mean = tape_.constant_real(run_mean);
      ad::Mat denom =
          (run_var.array() + kBnEps).sqrt().matrix();
      xn = tape_.div_rowvec(tape_.sub_rowvec(part, mean),
                            tape_.constant_real(denom));
    }
    return tape_.add_rowvec(tape_.mul_rowvec(xn, scale), shift);
  };
  ad::Var yre = normalize(tape_.real_part(x), stats.run_mean_re,
                          stats.run_var_re, scale_re, shift_re);
  ad::Var yim = normalize(tape_.imag_part(x), stats.run_mean_im,
                          stats.run_var_im, scale_im, shift_im);
  return tape_.make_complex(yre, yim);
}

ad::Var GnnGraph::cgal_layer(std::size_t l, ad::Var x) {
  const auto& spec = params_.arch.cgal[l];
  const int k_users = static_cast<int>(tape_.re(x).rows());
  std::vector<ad::Var> messages;
  messages.reserve(spec.heads);
  for (int d = 0; d < spec.heads; ++d) {
    const BoundHead& h = cgal_[l].heads[static_cast<std::size_t>(d)];
    ad::Var self = tape_.matmul(x, h.ws);
    ad::Var neigh = tape_.matmul(x, h.wn);
    ad::Var pairs = tape_.pair_sum(self, neigh);           // (K*K, head_dim)
    ad::Var act = tape_.cleaky_relu(pairs, kLeakySlope);
    ad::Var score = tape_.modulus(tape_.matmul(act, h.a)); // (K*K, 1)
    ad::Var logits = tape_.reshape(score, k_users, k_users);
    ad::Var gamma = tape_.row_softmax(logits);
    last_attention_.push_back(tape_.re(gamma));
    messages.push_back(tape_.matmul(gamma, tape_.matmul(x, h.wm)));
  }
  ad::Var out =
      messages.size() == 1 ? messages.front() : tape_.concat_cols(messages);
  if (spec.cbn)
    out = apply_cbn(out, params_.cgal[l].bn, cgal_[l].bn_scale_re,
                    cgal_[l].bn_shift_re, cgal_[l].bn_scale_im,
                    cgal_[l].bn_shift_im);
  if (spec.crelu) out = tape_.crelu(out);
  if (params_.arch.residual)
    out = tape_.add(out, tape_.matmul(x, cgal_[l].residual_proj));
  return out;
}

ad::Var GnnGraph::cfcl_linear(ad::Var x, ad::Var w) {
  ad::Var re = tape_.real_part(x);
  ad::Var im = tape_.imag_part(x);
  ad::Var a = tape_.matmul(tape_.sub(re, im), w);
  ad::Var b = tape_.matmul(tape_.add(im, re), w);
  return tape_.make_complex(a, b);
}

ad::Var GnnGraph::trunk_forward(ad::Var x) {
  for (std::size_t t = 0; t < trunk_.size(); ++t) {
    const auto& spec = params_.arch.cfcl_trunk[t];
    x = cfcl_linear(x, trunk_[t].w);
    if (spec.cbn)
      x = apply_cbn(x, params_.trunk[t].bn, trunk_[t].bn_scale_re,
                    trunk_[t].bn_shift_re, trunk_[t].bn_scale_im,
                    trunk_[t].bn_shift_im);
    if (spec.crelu) x = tape_.crelu(x);
  }
  return x;
}

ad::Var GnnGraph::node_features(const ChannelSet& channels) {
  channels.validate();
  if (channels.n_antennas() != params_.arch.input_dim() &&
      params_.arch.trunk == TrunkKind::GNN)
    throw InvalidInputError("channel antenna count does not match the arch");
  ad::Var x = tape_.constant(channels.h.real(), channels.h.imag());
  for (std::size_t l = 0; l < cgal_.size(); ++l) x = cgal_layer(l, x);
  return x;
}

GnnGraph::SchemeVars GnnGraph::head_and_metrics(ad::Var feats,
                                                const ChannelSet& channels,
                                                const SystemConfig& cfg,
                                                Scheme scheme) {
  if (scheme == Scheme::RAW)
    throw InvalidInputError("forward needs scheme MMSE or HZM");
  const int k_users = channels.k_users();
  const ad::Var head_w = scheme == Scheme::MMSE ? mmse_w_ : hzm_w_;
  ad::Var out = cfcl_linear(feats, head_w);  // (K, M_n), no activation
  ad::Var out_re = tape_.real_part(out);

  const int m_n = scheme == Scheme::MMSE ? 1 : 2;
  ad::Mat e0 = ad::Mat::Zero(m_n, 1);
  e0(0, 0) = 1.0;
  ad::Var p_raw = tape_.modulus(tape_.matmul(out_re, tape_.constant_real(e0)));

  // Budget projection: identity under the budget, rescale above it.
  ad::Var total_raw = tape_.reduce_sum(p_raw);
  ad::Var powers = p_raw;
  if (tape_.value(total_raw) > cfg.p_max) {
    ad::Var scale =
        tape_.div(tape_.constant_scalar(cfg.p_max), total_raw);
    powers = tape_.broadcast_mul(p_raw, scale);
  }

  SchemeVars vars;
  vars.p_raw = p_raw;
  vars.powers = powers;

  // Coupling magnitudes |h_k^H d_i|^2; constant for MMSE, alpha-dependent
  // for HZM.
  ad::Var coupling{};
  if (scheme == Scheme::MMSE) {
    const DirectionSet dirs = mmse_directions(channels, cfg);
    const CMatrix z = channels.h.conjugate() * dirs.dirs.transpose();
    coupling = tape_.constant_real(z.cwiseAbs2());
  } else {
    ad::Mat e1 = ad::Mat::Zero(m_n, 1);
    e1(1, 0) = 1.0;
    ad::Var alpha_raw =
        tape_.modulus(tape_.matmul(out_re, tape_.constant_real(e1)));
    ad::Var alpha = params_.arch.sigmoid_as_printed
                        ? tape_.sigmoid(tape_.axpb(alpha_raw, -1.0, 0.0))
                        : tape_.sigmoid(alpha_raw);
    vars.alpha_raw = alpha_raw;
    vars.alphas = alpha;
    const DirectionSet zf = zf_directions(channels);
    const DirectionSet mrt = mrt_directions(channels);
    ad::Var zf_c = tape_.constant(zf.dirs.real(), zf.dirs.imag());
    ad::Var mrt_c = tape_.constant(mrt.dirs.real(), mrt.dirs.imag());
    ad::Var mix = tape_.add(tape_.row_scale(zf_c, alpha),
                            tape_.row_scale(mrt_c, tape_.axpb(alpha, -1.0, 1.0)));
    ad::Var inv_norm = tape_.div(
        tape_.constant_real(ad::Mat::Ones(k_users, 1)), tape_.row_norm(mix));
    ad::Var dirs = tape_.row_scale(mix, inv_norm);
    ad::Var z = tape_.matmul(
        tape_.constant(channels.h.real(), -channels.h.imag()),
        tape_.transpose(dirs));
    coupling = tape_.abs2(z);
  }

  ad::Var rx_power = tape_.mul_rowvec(coupling, tape_.transpose(powers));
  ad::Var signal = tape_.diag_part(rx_power);
  ad::Var interference = tape_.sub(tape_.row_sum(rx_power), signal);
  ad::Mat sigma(k_users, 1);
  for (int k = 0; k < k_users; ++k) sigma(k, 0) = cfg.noise_powers[k];
  ad::Var denom = tape_.add(interference, tape_.constant_real(sigma));
  ad::Var sinr = tape_.div(signal, denom);
  vars.rates = tape_.log2_op(tape_.axpb(sinr, 1.0, 1.0));
  ad::Var sum_rates = tape_.reduce_sum(vars.rates);
  ad::Var total_power =
      tape_.axpb(tape_.reduce_sum(powers), 1.0, cfg.p_circuit);
  vars.ee = tape_.div(sum_rates, total_power);
  return vars;
}

GnnGraph::SchemeVars GnnGraph::scheme_forward(const ChannelSet& channels,
                                              const SystemConfig& cfg,
                                              Scheme scheme) {
  std::vector<const ChannelSet*> batch{&channels};
  return scheme_forward_batch(batch, cfg, scheme).front();
}

std::vector<GnnGraph::SchemeVars> GnnGraph::scheme_forward_batch(
    const std::vector<const ChannelSet*>& batch, const SystemConfig& cfg,
    Scheme scheme) {
  if (batch.empty()) throw InvalidInputError("empty forward batch");
  const int k_users = batch.front()->k_users();
  for (const ChannelSet* s : batch)
    if (s->k_users() != k_users)
      throw InvalidInputError("forward batch must share one user count");
  last_attention_.clear();

  ad::Var trunk_out{};
  if (params_.arch.trunk == TrunkKind::GNN) {
    std::vector<ad::Var> feats;
    feats.reserve(batch.size());
    for (const ChannelSet* s : batch) feats.push_back(node_features(*s));
    ad::Var stacked =
        feats.size() == 1 ? feats.front() : tape_.concat_rows(feats);
    trunk_out = trunk_forward(stacked);
  } else {
    if (k_users != params_.arch.mlp_k)
      throw InvalidInputError(
          "MLP trunk is fixed to K=" + std::to_string(params_.arch.mlp_k) +
          "; got K=" + std::to_string(k_users));
    std::vector<ad::Var> rows;
    rows.reserve(batch.size());
    for (const ChannelSet* s : batch) {
      s->validate();
      ad::Var x = tape_.constant(s->h.real(), s->h.imag());
      rows.push_back(
          tape_.reshape(x, 1, s->k_users() * s->n_antennas()));
    }
    ad::Var stacked =
        rows.size() == 1 ? rows.front() : tape_.concat_rows(rows);
    trunk_out = trunk_forward(stacked);
  }

  std::vector<SchemeVars> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ad::Var feats;
    if (params_.arch.trunk == TrunkKind::GNN) {
      feats = tape_.slice_rows(trunk_out, static_cast<int>(i) * k_users,
                               k_users);
    } else {
      ad::Var row = tape_.slice_rows(trunk_out, static_cast<int>(i), 1);
      feats = tape_.reshape(row, k_users, params_.arch.head_in_dim);
    }
    out.push_back(head_and_metrics(feats, *batch[i], cfg, scheme));
  }
  return out;
}

// ---- full pipeline -------------------------------------------------------

namespace {

SchemeOutput make_scheme_output(ad::Tape& tape,
                                const GnnGraph::SchemeVars& vars,
                                const ChannelSet& channels,
                                const SystemConfig& cfg, Scheme scheme) {
  SchemeOutput out;
  out.p_raw = tape.re(vars.p_raw).col(0);
  out.powers = tape.re(vars.powers).col(0);
  DirectionSet dirs;
  if (scheme == Scheme::MMSE) {
    dirs = mmse_directions(channels, cfg);
  } else {
    out.alpha_raw = tape.re(vars.alpha_raw).col(0);
    out.alphas = tape.re(vars.alphas).col(0);
    dirs = hzm_directions(channels, out.alphas);
  }
  out.beams = recover_beams(dirs, out.powers);
  out.perf = check_feasibility(channels, out.beams, cfg);
  return out;
}

ForwardOutput forward_impl(const ChannelSet& channels, const SystemConfig& cfg,
                           const GnnParams& params, ForwardMode mode) {
  ad::Tape tape;
  GnnParams scratch = params;  // evaluation copy; running stats untouched
  GnnGraph graph(tape, scratch, /*training=*/false);

  ForwardOutput out;
  if (mode == ForwardMode::MmseOnly || mode == ForwardMode::Select) {
    auto vars = graph.scheme_forward(channels, cfg, Scheme::MMSE);
    out.mmse = make_scheme_output(tape, vars, channels, cfg, Scheme::MMSE);
  }
  if (mode == ForwardMode::HzmOnly || mode == ForwardMode::Select) {
    auto vars = graph.scheme_forward(channels, cfg, Scheme::HZM);
    out.hzm = make_scheme_output(tape, vars, channels, cfg, Scheme::HZM);
  }
  if (mode == ForwardMode::MmseOnly) {
    out.selected = Scheme::MMSE;
    out.selected_feasible = out.mmse->perf.feasible;
  } else if (mode == ForwardMode::HzmOnly) {
    out.selected = Scheme::HZM;
    out.selected_feasible = out.hzm->perf.feasible;
  } else {
    const SelectionResult sel =
        select_scheme(out.mmse->perf.feasible, out.mmse->perf.ee,
                      out.hzm->perf.feasible, out.hzm->perf.ee);
    out.selected = sel.scheme;
    out.selected_feasible = sel.feasible;
  }
  return out;
}

}  // namespace

ForwardOutput full_forward(const ChannelSet& channels, const SystemConfig& cfg,
                           const GnnParams& params, ForwardMode mode) {
  return forward_impl(channels, cfg, params, mode);
}

ForwardOutput mlp_forward(const ChannelSet& channels, const SystemConfig& cfg,
                          const GnnParams& params) {
  if (params.arch.trunk != TrunkKind::MLP)
    throw ConfigError("mlp_forward needs an MLP architecture");
  return forward_impl(channels, cfg, params, ForwardMode::Select);
}

}  // namespace beamkit
