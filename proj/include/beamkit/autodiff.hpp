#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit::ad {

using Mat = Eigen::MatrixXd;

// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over complex tensors stored as independent (re, im)
// real matrices. Gradients are taken with respect to that real
// parameterization; losses must be real scalars. Define-by-run: every op
// computes its value immediately and records the pullback inputs it needs.
//
// Real-valued nodes simply carry no imaginary part. Ops that are
// real-by-contract (softmax, relu, log2, ...) reject complex inputs.
class Tape {
 public:
  // Leaves.
  Var param(Mat re, Mat im);    // complex, receives gradients
  Var param_real(Mat re);       // real, receives gradients
  Var constant(Mat re, Mat im); // complex, no gradient
  Var constant_real(Mat re);
  Var constant_scalar(double v);

  // Elementwise / structural.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var x);
  Var concat_cols(const std::vector<Var>& xs);
  // (K,I),(K,I) -> (K*K,I); row i*K+j = a.row(i) + b.row(j).
  Var pair_sum(Var a, Var b);
  Var reshape(Var x, int rows, int cols);  // row-major reinterpretation
  Var concat_rows(const std::vector<Var>& xs);
  Var slice_rows(Var x, int start, int count);

  // Complex <-> real.
  Var modulus(Var x);            // |z| (or |x| for real input)
  Var abs2(Var x);               // re^2 + im^2
  Var real_part(Var x);
  Var imag_part(Var x);
  Var make_complex(Var re, Var im);

  // Activations.
  Var cleaky_relu(Var x, double slope = 0.01);  // split re/im
  Var crelu(Var x);                             // split re/im
  Var relu(Var x);                              // real
  Var sigmoid(Var x);                           // real
  Var row_softmax(Var x);                       // real, softmax along rows

  // Real arithmetic.
  Var axpb(Var x, double a, double b);  // a*x + b
  Var div(Var a, Var b);                // elementwise
  Var sqrt_op(Var x);
  Var log2_op(Var x);

  // Reductions / broadcasts.
  Var reduce_sum(Var x);   // real -> 1x1
  Var reduce_mean(Var x);  // real -> 1x1
  Var row_sum(Var x);      // real (K,N) -> (K,1)
  Var row_norm(Var x);     // (K,N) -> (K,1), Euclidean norm of each row
  Var diag_part(Var x);    // real (K,K) -> (K,1)
  Var col_mean(Var x);     // real (K,N) -> (1,N)
  Var row_scale(Var m, Var s);      // row k scaled by s(k,0); s real
  Var broadcast_mul(Var x, Var s);  // x * s, s real 1x1
  Var add_rowvec(Var x, Var v);     // real (K,N) op (1,N)
  Var sub_rowvec(Var x, Var v);
  Var mul_rowvec(Var x, Var v);
  Var div_rowvec(Var x, Var v);

  // Values.
  const Mat& re(Var v) const { return node(v).re; }
  const Mat& im(Var v) const;
  bool is_complex(Var v) const { return node(v).cplx; }
  double value(Var v) const;  // 1x1 real

  // Reverse pass from a real scalar loss. One backward per tape unless
  // clear() is called.
  void backward(Var loss);
  const Mat& grad_re(Var v) const;
  const Mat& grad_im(Var v) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kAdd, kSub, kMatmul, kTranspose, kConcat, kPairSum, kReshape,
    kConcatRows, kSliceRows,
    kModulus, kAbs2, kRealPart, kImagPart, kMakeComplex,
    kCLeakyRelu, kCRelu, kRelu, kSigmoid, kRowSoftmax,
    kAxpb, kDiv, kSqrt, kLog2,
    kReduceSum, kReduceMean, kRowSum, kRowNorm, kDiagPart, kColMean,
    kRowScale, kBroadcastMul, kAddRowVec, kSubRowVec, kMulRowVec, kDivRowVec,
  };

  struct Node {
    Op op = Op::kLeaf;
    std::vector<int> in;
    Mat re, im;    // value (im empty for real nodes)
    Mat gre, gim;  // adjoints (allocated during backward)
    bool cplx = false;
    bool needs_grad = false;
    double d0 = 0.0, d1 = 0.0;  // op constants
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Node n);
  Var unary(Op op, Var x, double d0 = 0.0, double d1 = 0.0);
  void check_same_shape(Var a, Var b, const char* what) const;
  [[noreturn]] void shape_error(const char* what, Var a, Var b) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Convenience: 1x1 constant matrices.
Mat scalar_mat(double v);

}  // namespace beamkit::ad
