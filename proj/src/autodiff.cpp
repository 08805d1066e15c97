#include "beamkit/autodiff.hpp"

#include <cmath>

namespace beamkit::ad {

namespace {
constexpr double kLn2 = 0.6931471805599453;
constexpr double kNormFloor = 1e-300;

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}
}  // namespace

Mat scalar_mat(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw LifecycleError("dangling tape handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

Var Tape::push(Node n) {
  if (backward_done_)
    throw LifecycleError("tape already differentiated; call clear() first");
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::im(Var v) const {
  const Node& n = node(v);
  if (!n.cplx) throw InvalidInputError("node is real; it has no imag part");
  return n.im;
}

double Tape::value(Var v) const {
  const Node& n = node(v);
  if (n.cplx || n.re.size() != 1)
    throw InvalidInputError("value() needs a real 1x1 node");
  return n.re(0, 0);
}

void Tape::shape_error(const char* what, Var a, Var b) const {
  throw InvalidInputError(std::string(what) + ": shapes " +
                          shape_str(node(a).re) + " and " +
                          shape_str(node(b).re) + " are incompatible");
}

void Tape::check_same_shape(Var a, Var b, const char* what) const {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.re.rows() != nb.re.rows() || na.re.cols() != nb.re.cols())
    shape_error(what, a, b);
}

// ---- leaves -------------------------------------------------------------

Var Tape::param(Mat re, Mat im) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw InvalidInputError("param: re/im shapes differ");
  Node n;
  n.re = std::move(re);
  n.im = std::move(im);
  n.cplx = true;
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::param_real(Mat re) {
  Node n;
  n.re = std::move(re);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Mat re, Mat im) {
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw InvalidInputError("constant: re/im shapes differ");
  Node n;
  n.re = std::move(re);
  n.im = std::move(im);
  n.cplx = true;
  return push(std::move(n));
}

Var Tape::constant_real(Mat re) {
  Node n;
  n.re = std::move(re);
  return push(std::move(n));
}

Var Tape::constant_scalar(double v) { return constant_real(scalar_mat(v)); }

// ---- structural ---------------------------------------------------------

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cplx != nb.cplx)
    throw InvalidInputError("add: cannot mix real and complex operands");
  Node n;
  n.op = Op::kAdd;
  n.in = {a.id, b.id};
  n.re = na.re + nb.re;
  if (na.cplx) {
    n.im = na.im + nb.im;
    n.cplx = true;
  }
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cplx != nb.cplx)
    throw InvalidInputError("sub: cannot mix real and complex operands");
  Node n;
  n.op = Op::kSub;
  n.in = {a.id, b.id};
  n.re = na.re - nb.re;
  if (na.cplx) {
    n.im = na.im - nb.im;
    n.cplx = true;
  }
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.re.cols() != nb.re.rows()) shape_error("matmul", a, b);
  Node n;
  n.op = Op::kMatmul;
  n.in = {a.id, b.id};
  if (na.cplx && nb.cplx) {
    n.re = na.re * nb.re - na.im * nb.im;
    n.im = na.re * nb.im + na.im * nb.re;
    n.cplx = true;
  } else if (na.cplx) {
    n.re = na.re * nb.re;
    n.im = na.im * nb.re;
    n.cplx = true;
  } else if (nb.cplx) {
    n.re = na.re * nb.re;
    n.im = na.re * nb.im;
    n.cplx = true;
  } else {
    n.re = na.re * nb.re;
  }
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Var Tape::transpose(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::kTranspose;
  n.in = {x.id};
  n.re = nx.re.transpose();
  if (nx.cplx) {
    n.im = nx.im.transpose();
    n.cplx = true;
  }
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInputError("concat: no inputs");
  const Node& first = node(xs.front());
  Eigen::Index rows = first.re.rows();
  Eigen::Index cols = 0;
  const bool cplx = first.cplx;
  for (Var v : xs) {
    const Node& nv = node(v);
    if (nv.re.rows() != rows || nv.cplx != cplx)
      throw InvalidInputError("concat: mismatched rows or domain");
    cols += nv.re.cols();
  }
  Node n;
  n.op = Op::kConcat;
  n.re.resize(rows, cols);
  if (cplx) {
    n.im.resize(rows, cols);
    n.cplx = true;
  }
  Eigen::Index at = 0;
  for (Var v : xs) {
    const Node& nv = node(v);
    n.in.push_back(v.id);
    n.re.middleCols(at, nv.re.cols()) = nv.re;
    if (cplx) n.im.middleCols(at, nv.re.cols()) = nv.im;
    at += nv.re.cols();
    n.needs_grad = n.needs_grad || nv.needs_grad;
  }
  return push(std::move(n));
}

Var Tape::pair_sum(Var a, Var b) {
  check_same_shape(a, b, "pair_sum");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (!na.cplx || !nb.cplx)
    throw InvalidInputError("pair_sum expects complex inputs");
  const Eigen::Index k = na.re.rows();
  const Eigen::Index c = na.re.cols();
  Node n;
  n.op = Op::kPairSum;
  n.in = {a.id, b.id};
  n.cplx = true;
  n.re.resize(k * k, c);
  n.im.resize(k * k, c);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      n.re.row(i * k + j) = na.re.row(i) + nb.re.row(j);
      n.im.row(i * k + j) = na.im.row(i) + nb.im.row(j);
    }
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw InvalidInputError("concat_rows: no inputs");
  const Node& first = node(xs.front());
  Eigen::Index cols = first.re.cols();
  Eigen::Index rows = 0;
  const bool cplx = first.cplx;
  for (Var v : xs) {
    const Node& nv = node(v);
    if (nv.re.cols() != cols || nv.cplx != cplx)
      throw InvalidInputError("concat_rows: mismatched cols or domain");
    rows += nv.re.rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.re.resize(rows, cols);
  if (cplx) {
    n.im.resize(rows, cols);
    n.cplx = true;
  }
  Eigen::Index at = 0;
  for (Var v : xs) {
    const Node& nv = node(v);
    n.in.push_back(v.id);
    n.re.middleRows(at, nv.re.rows()) = nv.re;
    if (cplx) n.im.middleRows(at, nv.re.rows()) = nv.im;
    at += nv.re.rows();
    n.needs_grad = n.needs_grad || nv.needs_grad;
  }
  return push(std::move(n));
}

Var Tape::slice_rows(Var x, int start, int count) {
  const Node& nx = node(x);
  if (start < 0 || count < 1 || start + count > nx.re.rows())
    throw InvalidInputError("slice_rows: range out of bounds");
  Node n;
  n.op = Op::kSliceRows;
  n.in = {x.id};
  n.d0 = start;
  n.re = nx.re.middleRows(start, count);
  if (nx.cplx) {
    n.im = nx.im.middleRows(start, count);
    n.cplx = true;
  }
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::reshape(Var x, int rows, int cols) {
  const Node& nx = node(x);
  if (static_cast<Eigen::Index>(rows) * cols != nx.re.size())
    throw InvalidInputError("reshape: element count mismatch");
  auto remap = [&](const Mat& src) {
    Mat out(rows, cols);
    const Eigen::Index sc = src.cols();
    for (Eigen::Index idx = 0; idx < src.size(); ++idx)
      out(idx / cols, idx % cols) = src(idx / sc, idx % sc);
    return out;
  };
  Node n;
  n.op = Op::kReshape;
  n.in = {x.id};
  n.re = remap(nx.re);
  if (nx.cplx) {
    n.im = remap(nx.im);
    n.cplx = true;
  }
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

// ---- complex <-> real ---------------------------------------------------

Var Tape::modulus(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::kModulus;
  n.in = {x.id};
  if (nx.cplx)
    n.re = (nx.re.array().square() + nx.im.array().square()).sqrt().matrix();
  else
    n.re = nx.re.array().abs().matrix();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::abs2(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::kAbs2;
  n.in = {x.id};
  n.re = nx.re.array().square().matrix();
  if (nx.cplx) n.re += nx.im.array().square().matrix();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::real_part(Var x) {
  const Node& nx = node(x);
  if (!nx.cplx) throw InvalidInputError("real_part expects a complex node");
  Node n;
  n.op = Op::kRealPart;
  n.in = {x.id};
  n.re = nx.re;
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::imag_part(Var x) {
  const Node& nx = node(x);
  if (!nx.cplx) throw InvalidInputError("imag_part expects a complex node");
  Node n;
  n.op = Op::kImagPart;
  n.in = {x.id};
  n.re = nx.im;
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::make_complex(Var re_v, Var im_v) {
  check_same_shape(re_v, im_v, "make_complex");
  const Node& nr = node(re_v);
  const Node& ni = node(im_v);
  if (nr.cplx || ni.cplx)
    throw InvalidInputError("make_complex expects real inputs");
  Node n;
  n.op = Op::kMakeComplex;
  n.in = {re_v.id, im_v.id};
  n.re = nr.re;
  n.im = ni.re;
  n.cplx = true;
  n.needs_grad = nr.needs_grad || ni.needs_grad;
  return push(std::move(n));
}

// ---- activations --------------------------------------------------------

Var Tape::cleaky_relu(Var x, double slope) {
  const Node& nx = node(x);
  if (!nx.cplx) throw InvalidInputError("cleaky_relu expects complex input");
  Node n;
  n.op = Op::kCLeakyRelu;
  n.in = {x.id};
  n.d0 = slope;
  n.cplx = true;
  n.re = nx.re.unaryExpr([&](double v) { return v > 0 ? v : slope * v; });
  n.im = nx.im.unaryExpr([&](double v) { return v > 0 ? v : slope * v; });
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::crelu(Var x) {
  const Node& nx = node(x);
  if (!nx.cplx) throw InvalidInputError("crelu expects complex input");
  Node n;
  n.op = Op::kCRelu;
  n.in = {x.id};
  n.cplx = true;
  n.re = nx.re.cwiseMax(0.0);
  n.im = nx.im.cwiseMax(0.0);
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("relu expects real input");
  Node n;
  n.op = Op::kRelu;
  n.in = {x.id};
  n.re = nx.re.cwiseMax(0.0);
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::sigmoid(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("sigmoid expects real input");
  Node n;
  n.op = Op::kSigmoid;
  n.in = {x.id};
  n.re = nx.re.unaryExpr([](double v) {
    // Stable logistic.
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::row_softmax(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("row_softmax expects real input");
  Node n;
  n.op = Op::kRowSoftmax;
  n.in = {x.id};
  n.re.resizeLike(nx.re);
  for (Eigen::Index r = 0; r < nx.re.rows(); ++r) {
    const double mx = nx.re.row(r).maxCoeff();
    Eigen::RowVectorXd e =
        (nx.re.row(r).array() - mx).exp().matrix();
    n.re.row(r) = e / e.sum();
  }
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

// ---- real arithmetic ----------------------------------------------------

Var Tape::unary(Op op, Var x, double d0, double d1) {
  const Node& nx = node(x);
  Node n;
  n.op = op;
  n.in = {x.id};
  n.d0 = d0;
  n.d1 = d1;
  n.needs_grad = nx.needs_grad;
  switch (op) {
    case Op::kAxpb:
      if (nx.cplx) throw InvalidInputError("axpb expects real input");
      n.re = (d0 * nx.re.array() + d1).matrix();
      break;
    case Op::kSqrt:
      if (nx.cplx) throw InvalidInputError("sqrt expects real input");
      n.re = nx.re.array().sqrt().matrix();
      break;
    case Op::kLog2:
      if (nx.cplx) throw InvalidInputError("log2 expects real input");
      n.re = (nx.re.array().log() / kLn2).matrix();
      break;
    default:
      throw LifecycleError("unary: unhandled op");
  }
  return push(std::move(n));
}

Var Tape::axpb(Var x, double a, double b) { return unary(Op::kAxpb, x, a, b); }
Var Tape::sqrt_op(Var x) { return unary(Op::kSqrt, x); }
Var Tape::log2_op(Var x) { return unary(Op::kLog2, x); }

Var Tape::div(Var a, Var b) {
  check_same_shape(a, b, "div");
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cplx || nb.cplx) throw InvalidInputError("div expects real inputs");
  Node n;
  n.op = Op::kDiv;
  n.in = {a.id, b.id};
  n.re = (na.re.array() / nb.re.array()).matrix();
  n.needs_grad = na.needs_grad || nb.needs_grad;
  return push(std::move(n));
}

// ---- reductions / broadcasts --------------------------------------------

Var Tape::reduce_sum(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("reduce_sum expects real input");
  Node n;
  n.op = Op::kReduceSum;
  n.in = {x.id};
  n.re = scalar_mat(nx.re.sum());
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::reduce_mean(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("reduce_mean expects real input");
  Node n;
  n.op = Op::kReduceMean;
  n.in = {x.id};
  n.re = scalar_mat(nx.re.mean());
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::row_sum(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("row_sum expects real input");
  Node n;
  n.op = Op::kRowSum;
  n.in = {x.id};
  n.re = nx.re.rowwise().sum();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::row_norm(Var x) {
  const Node& nx = node(x);
  Node n;
  n.op = Op::kRowNorm;
  n.in = {x.id};
  if (nx.cplx)
    n.re = (nx.re.array().square().rowwise().sum() +
            nx.im.array().square().rowwise().sum())
               .sqrt()
               .matrix();
  else
    n.re = nx.re.array().square().rowwise().sum().sqrt().matrix();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::diag_part(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("diag_part expects real input");
  if (nx.re.rows() != nx.re.cols())
    throw InvalidInputError("diag_part expects a square matrix");
  Node n;
  n.op = Op::kDiagPart;
  n.in = {x.id};
  n.re = nx.re.diagonal();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::col_mean(Var x) {
  const Node& nx = node(x);
  if (nx.cplx) throw InvalidInputError("col_mean expects real input");
  Node n;
  n.op = Op::kColMean;
  n.in = {x.id};
  n.re = nx.re.colwise().mean();
  n.needs_grad = nx.needs_grad;
  return push(std::move(n));
}

Var Tape::row_scale(Var m, Var s) {
  const Node& nm = node(m);
  const Node& ns = node(s);
  if (ns.cplx) throw InvalidInputError("row_scale: scale must be real");
  if (ns.re.cols() != 1 || ns.re.rows() != nm.re.rows())
    shape_error("row_scale", m, s);
  Node n;
  n.op = Op::kRowScale;
  n.in = {m.id, s.id};
  n.re = (nm.re.array().colwise() * ns.re.col(0).array()).matrix();
  if (nm.cplx) {
    n.im = (nm.im.array().colwise() * ns.re.col(0).array()).matrix();
    n.cplx = true;
  }
  n.needs_grad = nm.needs_grad || ns.needs_grad;
  return push(std::move(n));
}

Var Tape::broadcast_mul(Var x, Var s) {
  const Node& nx = node(x);
  const Node& ns = node(s);
  if (ns.cplx || ns.re.size() != 1)
    throw InvalidInputError("broadcast_mul: scale must be real 1x1");
  const double c = ns.re(0, 0);
  Node n;
  n.op = Op::kBroadcastMul;
  n.in = {x.id, s.id};
  n.re = c * nx.re;
  if (nx.cplx) {
    n.im = c * nx.im;
    n.cplx = true;
  }
  n.needs_grad = nx.needs_grad || ns.needs_grad;
  return push(std::move(n));
}

namespace {
enum class RowVecOp { kAdd, kSub, kMul, kDiv };
}

Var Tape::add_rowvec(Var x, Var v) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  if (nx.cplx || nv.cplx)
    throw InvalidInputError("add_rowvec expects real inputs");
  if (nv.re.rows() != 1 || nv.re.cols() != nx.re.cols())
    shape_error("add_rowvec", x, v);
  Node n;
  n.op = Op::kAddRowVec;
  n.in = {x.id, v.id};
  n.re = (nx.re.array().rowwise() + nv.re.row(0).array()).matrix();
  n.needs_grad = nx.needs_grad || nv.needs_grad;
  return push(std::move(n));
}

Var Tape::sub_rowvec(Var x, Var v) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  if (nx.cplx || nv.cplx)
    throw InvalidInputError("sub_rowvec expects real inputs");
  if (nv.re.rows() != 1 || nv.re.cols() != nx.re.cols())
    shape_error("sub_rowvec", x, v);
  Node n;
  n.op = Op::kSubRowVec;
  n.in = {x.id, v.id};
  n.re = (nx.re.array().rowwise() - nv.re.row(0).array()).matrix();
  n.needs_grad = nx.needs_grad || nv.needs_grad;
  return push(std::move(n));
}

Var Tape::mul_rowvec(Var x, Var v) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  if (nx.cplx || nv.cplx)
    throw InvalidInputError("mul_rowvec expects real inputs");
  if (nv.re.rows() != 1 || nv.re.cols() != nx.re.cols())
    shape_error("mul_rowvec", x, v);
  Node n;
  n.op = Op::kMulRowVec;
  n.in = {x.id, v.id};
  n.re = (nx.re.array().rowwise() * nv.re.row(0).array()).matrix();
  n.needs_grad = nx.needs_grad || nv.needs_grad;
  return push(std::move(n));
}

Var Tape::div_rowvec(Var x, Var v) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  if (nx.cplx || nv.cplx)
    throw InvalidInputError("div_rowvec expects real inputs");
  if (nv.re.rows() != 1 || nv.re.cols() != nx.re.cols())
    shape_error("div_rowvec", x, v);
  Node n;
  n.op = Op::kDivRowVec;
  n.in = {x.id, v.id};
  n.re = (nx.re.array().rowwise() / nv.re.row(0).array()).matrix();
  n.needs_grad = nx.needs_grad || nv.needs_grad;
  return push(std::move(n));
}

// ---- backward -----------------------------------------------------------

const Mat& Tape::grad_re(Var v) const {
  if (!backward_done_) throw LifecycleError("backward has not run");
  return node(v).gre;
}

const Mat& Tape::grad_im(Var v) const {
  if (!backward_done_) throw LifecycleError("backward has not run");
  const Node& n = node(v);
  if (!n.cplx) throw InvalidInputError("node is real; it has no imag grad");
  return n.gim;
}

void Tape::clear() {
  nodes_.clear();
  backward_done_ = false;
}

void Tape::backward(Var loss) {
  if (backward_done_)
    throw LifecycleError("backward already ran on this tape");
  if (nodes_.empty()) throw LifecycleError("backward on an empty tape");
  Node& ln = node(loss);
  if (ln.cplx || ln.re.size() != 1)
    throw InvalidInputError("loss must be a real scalar");
  if (!std::isfinite(ln.re(0, 0)))
    throw NumericError("loss is non-finite");
  backward_done_ = true;

  for (Node& n : nodes_) {
    if (!n.needs_grad) continue;
    n.gre = Mat::Zero(n.re.rows(), n.re.cols());
    if (n.cplx) n.gim = Mat::Zero(n.im.rows(), n.im.cols());
  }
  if (!node(loss).needs_grad) return;  // loss does not depend on any param
  node(loss).gre(0, 0) = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.op == Op::kLeaf) continue;
    auto in = [&](int slot) -> Node& {
      return nodes_[static_cast<std::size_t>(n.in[static_cast<std::size_t>(
          slot)])];
    };
    auto want = [&](int slot) { return in(slot).needs_grad; };
    const Mat& g = n.gre;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s)
          if (want(s)) {
            in(s).gre += g;
            if (n.cplx) in(s).gim += n.gim;
          }
        break;
      }
      case Op::kSub: {
        if (want(0)) {
          in(0).gre += g;
          if (n.cplx) in(0).gim += n.gim;
        }
        if (want(1)) {
          in(1).gre -= g;
          if (n.cplx) in(1).gim -= n.gim;
        }
        break;
      }
      case Op::kMatmul: {
        Node& a = in(0);
        Node& b = in(1);
        if (a.cplx && b.cplx) {
          if (a.needs_grad) {
            a.gre += g * b.re.transpose() + n.gim * b.im.transpose();
            a.gim += -g * b.im.transpose() + n.gim * b.re.transpose();
          }
          if (b.needs_grad) {
            b.gre += a.re.transpose() * g + a.im.transpose() * n.gim;
            b.gim += -a.im.transpose() * g + a.re.transpose() * n.gim;
          }
        } else if (a.cplx) {  // b real
          if (a.needs_grad) {
            a.gre += g * b.re.transpose();
            a.gim += n.gim * b.re.transpose();
          }
          if (b.needs_grad)
            b.gre += a.re.transpose() * g + a.im.transpose() * n.gim;
        } else if (b.cplx) {  // a real
          if (a.needs_grad)
            a.gre += g * b.re.transpose() + n.gim * b.im.transpose();
          if (b.needs_grad) {
            b.gre += a.re.transpose() * g;
            b.gim += a.re.transpose() * n.gim;
          }
        } else {
          if (a.needs_grad) a.gre += g * b.re.transpose();
          if (b.needs_grad) b.gre += a.re.transpose() * g;
        }
        break;
      }
      case Op::kTranspose: {
        in(0).gre += g.transpose();
        if (n.cplx) in(0).gim += n.gim.transpose();
        break;
      }
      case Op::kConcat: {
        Eigen::Index at = 0;
        for (std::size_t s = 0; s < n.in.size(); ++s) {
          Node& a = in(static_cast<int>(s));
          if (a.needs_grad) {
            a.gre += g.middleCols(at, a.re.cols());
            if (n.cplx) a.gim += n.gim.middleCols(at, a.re.cols());
          }
          at += a.re.cols();
        }
        break;
      }
      case Op::kPairSum: {
        Node& a = in(0);
        Node& b = in(1);
        const Eigen::Index k = a.re.rows();
        for (Eigen::Index i = 0; i < k; ++i)
          for (Eigen::Index j = 0; j < k; ++j) {
            const Eigen::Index r = i * k + j;
            if (a.needs_grad) {
              a.gre.row(i) += g.row(r);
              a.gim.row(i) += n.gim.row(r);
            }
            if (b.needs_grad) {
              b.gre.row(j) += g.row(r);
              b.gim.row(j) += n.gim.row(r);
            }
          }
        break;
      }
      case Op::kConcatRows: {
        Eigen::Index at = 0;
        for (std::size_t s = 0; s < n.in.size(); ++s) {
          Node& a = in(static_cast<int>(s));
          if (a.needs_grad) {
            a.gre += g.middleRows(at, a.re.rows());
            if (n.cplx) a.gim += n.gim.middleRows(at, a.re.rows());
          }
          at += a.re.rows();
        }
        break;
      }
      case Op::kSliceRows: {
        Node& a = in(0);
        const auto start = static_cast<Eigen::Index>(n.d0);
        a.gre.middleRows(start, n.re.rows()) += g;
        if (n.cplx) a.gim.middleRows(start, n.re.rows()) += n.gim;
        break;
      }
      case Op::kReshape: {
        Node& a = in(0);
        const Eigen::Index sc = a.re.cols();
        const Eigen::Index dc = n.re.cols();
        for (Eigen::Index idx = 0; idx < n.re.size(); ++idx) {
          a.gre(idx / sc, idx % sc) += g(idx / dc, idx % dc);
          if (n.cplx) a.gim(idx / sc, idx % sc) += n.gim(idx / dc, idx % dc);
        }
        break;
      }
      case Op::kModulus: {
        Node& a = in(0);
        if (a.cplx) {
          for (Eigen::Index idx = 0; idx < n.re.size(); ++idx) {
            const double m = n.re(idx);
            if (m > kNormFloor) {
              a.gre(idx) += g(idx) * a.re(idx) / m;
              a.gim(idx) += g(idx) * a.im(idx) / m;
            }
          }
        } else {
          for (Eigen::Index idx = 0; idx < n.re.size(); ++idx) {
            const double v = a.re(idx);
            if (v > 0)
              a.gre(idx) += g(idx);
            else if (v < 0)
              a.gre(idx) -= g(idx);
          }
        }
        break;
      }
      case Op::kAbs2: {
        Node& a = in(0);
        a.gre += 2.0 * g.cwiseProduct(a.re);
        if (a.cplx) a.gim += 2.0 * g.cwiseProduct(a.im);
        break;
      }
      case Op::kRealPart:
        in(0).gre += g;
        break;
      case Op::kImagPart:
        in(0).gim += g;
        break;
      case Op::kMakeComplex: {
        if (want(0)) in(0).gre += g;
        if (want(1)) in(1).gre += n.gim;
        break;
      }
      case Op::kCLeakyRelu: {
        Node& a = in(0);
        const double slope = n.d0;
        a.gre += g.binaryExpr(a.re, [&](double gv, double xv) {
          return xv > 0 ? gv : slope * gv;
        });
        a.gim += n.gim.binaryExpr(a.im, [&](double gv, double xv) {
          return xv > 0 ? gv : slope * gv;
        });
        break;
      }
      case Op::kCRelu: {
        Node& a = in(0);
        a.gre += g.binaryExpr(a.re, [](double gv, double xv) {
          return xv > 0 ? gv : 0.0;
        });
        a.gim += n.gim.binaryExpr(a.im, [](double gv, double xv) {
          return xv > 0 ? gv : 0.0;
        });
        break;
      }
      case Op::kRelu: {
        Node& a = in(0);
        a.gre += g.binaryExpr(a.re, [](double gv, double xv) {
          return xv > 0 ? gv : 0.0;
        });
        break;
      }
      case Op::kSigmoid: {
        Node& a = in(0);
        a.gre +=
            g.cwiseProduct(n.re.cwiseProduct(Mat::Ones(n.re.rows(),
                                                       n.re.cols()) -
                                             n.re));
        break;
      }
      case Op::kRowSoftmax: {
        Node& a = in(0);
        for (Eigen::Index r = 0; r < n.re.rows(); ++r) {
          const double dot = g.row(r).cwiseProduct(n.re.row(r)).sum();
          a.gre.row(r) +=
              n.re.row(r).cwiseProduct(
                  g.row(r) - Eigen::RowVectorXd::Constant(n.re.cols(), dot));
        }
        break;
      }
      case Op::kAxpb:
        in(0).gre += n.d0 * g;
        break;
      case Op::kDiv: {
        Node& a = in(0);
        Node& b = in(1);
        if (a.needs_grad) a.gre += g.cwiseQuotient(b.re);
        if (b.needs_grad)
          b.gre -= g.cwiseProduct(n.re).cwiseQuotient(b.re);
        break;
      }
      case Op::kSqrt: {
        Node& a = in(0);
        for (Eigen::Index idx = 0; idx < n.re.size(); ++idx)
          if (n.re(idx) > kNormFloor)
            a.gre(idx) += g(idx) / (2.0 * n.re(idx));
        break;
      }
      case Op::kLog2: {
        Node& a = in(0);
        a.gre += (g.array() / (a.re.array() * kLn2)).matrix();
        break;
      }
      case Op::kReduceSum:
        in(0).gre.array() += g(0, 0);
        break;
      case Op::kReduceMean:
        in(0).gre.array() += g(0, 0) / static_cast<double>(in(0).re.size());
        break;
      case Op::kRowSum: {
        Node& a = in(0);
        a.gre.colwise() += g.col(0);
        break;
      }
      case Op::kRowNorm: {
        Node& a = in(0);
        for (Eigen::Index r = 0; r < a.re.rows(); ++r) {
          const double nrm = n.re(r, 0);
          if (nrm <= kNormFloor) continue;
          const double s = g(r, 0) / nrm;
          a.gre.row(r) += s * a.re.row(r);
          if (a.cplx) a.gim.row(r) += s * a.im.row(r);
        }
        break;
      }
      case Op::kDiagPart: {
        Node& a = in(0);
        for (Eigen::Index r = 0; r < g.rows(); ++r) a.gre(r, r) += g(r, 0);
        break;
      }
      case Op::kColMean: {
        Node& a = in(0);
        const double inv = 1.0 / static_cast<double>(a.re.rows());
        a.gre.rowwise() += inv * g.row(0);
        break;
      }
      case Op::kRowScale: {
        Node& m = in(0);
        Node& s = in(1);
        if (m.needs_grad) {
          m.gre += (g.array().colwise() * s.re.col(0).array()).matrix();
          if (m.cplx)
            m.gim += (n.gim.array().colwise() * s.re.col(0).array()).matrix();
        }
        if (s.needs_grad) {
          s.gre.col(0) += g.cwiseProduct(m.re).rowwise().sum();
          if (m.cplx)
            s.gre.col(0) += n.gim.cwiseProduct(m.im).rowwise().sum();
        }
        break;
      }
      case Op::kBroadcastMul: {
        Node& x = in(0);
        Node& s = in(1);
        const double c = s.re(0, 0);
        if (x.needs_grad) {
          x.gre += c * g;
          if (x.cplx) x.gim += c * n.gim;
        }
        if (s.needs_grad) {
          double acc = g.cwiseProduct(x.re).sum();
          if (x.cplx) acc += n.gim.cwiseProduct(x.im).sum();
          s.gre(0, 0) += acc;
        }
        break;
      }
      case Op::kAddRowVec: {
        if (want(0)) in(0).gre += g;
        if (want(1)) in(1).gre.row(0) += g.colwise().sum();
        break;
      }
      case Op::kSubRowVec: {
        if (want(0)) in(0).gre += g;
        if (want(1)) in(1).gre.row(0) -= g.colwise().sum();
        break;
      }
      case Op::kMulRowVec: {
        Node& x = in(0);
        Node& v = in(1);
        if (x.needs_grad)
          x.gre += (g.array().rowwise() * v.re.row(0).array()).matrix();
        if (v.needs_grad)
          v.gre.row(0) += g.cwiseProduct(x.re).colwise().sum();
        break;
      }
      case Op::kDivRowVec: {
        Node& x = in(0);
        Node& v = in(1);
        if (x.needs_grad)
          x.gre += (g.array().rowwise() / v.re.row(0).array()).matrix();
        if (v.needs_grad)
          v.gre.row(0) -=
              (g.cwiseProduct(n.re).array().rowwise() / v.re.row(0).array())
                  .matrix()
                  .colwise()
                  .sum();
        break;
      }
    }
  }
}

}  // namespace beamkit::ad
