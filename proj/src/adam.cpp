#include "beamkit/adam.hpp"

#include <cmath>

namespace beamkit {

void Adam::step(std::vector<Eigen::MatrixXd*> params,
                const std::vector<const Eigen::MatrixXd*>& grads) {
  if (params.size() != grads.size())
    throw InvalidInputError("adam: param/grad count mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Eigen::MatrixXd::Zero(params[i]->rows(), params[i]->cols());
      v_[i] = Eigen::MatrixXd::Zero(params[i]->rows(), params[i]->cols());
    }
  }
  if (m_.size() != params.size())
    throw InvalidInputError("adam: parameter count changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->rows() != params[i]->rows() ||
        grads[i]->cols() != params[i]->cols())
      throw InvalidInputError("adam: grad shape mismatch");
    if (!grads[i]->allFinite())
      throw NumericError("adam: non-finite gradient");
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, double(step_count_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, double(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * (*grads[i]);
    v_[i] = opts_.beta2 * v_[i] +
            (1.0 - opts_.beta2) * grads[i]->cwiseProduct(*grads[i]);
    const Eigen::ArrayXXd m_hat = m_[i].array() / bc1;
    const Eigen::ArrayXXd v_hat = v_[i].array() / bc2;
    params[i]->array() -= opts_.lr * m_hat / (v_hat.sqrt() + opts_.epsilon);
  }
}

}  // namespace beamkit
