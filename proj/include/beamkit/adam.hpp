#pragma once

#include <Eigen/Dense>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a flat list of real arrays. Complex parameters
// participate as two independent real arrays (re, im).
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  // Registers parameter shapes lazily on the first step.
  // Throws NumericError if any gradient entry is non-finite.
  void step(std::vector<Eigen::MatrixXd*> params,
            const std::vector<const Eigen::MatrixXd*>& grads);

  std::uint64_t step_count() const { return step_count_; }
  const AdamOptions& options() const { return opts_; }

 private:
  AdamOptions opts_;
  std::vector<Eigen::MatrixXd> m_, v_;
  std::uint64_t step_count_ = 0;
};

}  // namespace beamkit
