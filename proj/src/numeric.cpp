#include "mmm/numeric.hpp"

#include <cmath>

#include "mmm/errors.hpp"

namespace mmm {

HuberResult huber_loss(const Vector& residuals, const HuberSpec& spec) {
  require(spec.delta > 0.0, ErrorCode::invalid_argument, "huber_loss: delta must be positive");
  require(residuals.allFinite(), ErrorCode::invalid_argument, "huber_loss: non-finite residual");

  const double delta = spec.delta;
  const Eigen::Index n = residuals.size();
  HuberResult out;
  out.grad = Vector::Zero(n);
  if (n == 0) return out;

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = residuals[i];
    const double ar = std::abs(r);
    if (ar <= delta) {
      total += 0.5 * r * r;
      out.grad[i] = r;
    } else {
      total += delta * (ar - 0.5 * delta);
      out.grad[i] = r > 0.0 ? delta : -delta;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = total * inv_n;
  out.grad *= inv_n;
  return out;
}

Vector clip_gradient_norm(Vector grad, double max_norm) {
  require(max_norm > 0.0, ErrorCode::invalid_argument, "clip_gradient_norm: max_norm must be positive");
  const double norm = grad.norm();
  if (norm > max_norm) grad *= max_norm / norm;
  return grad;
}

AdamState AdamState::make(Eigen::Index size, double learning_rate) {
  AdamState state;
  state.first_moment = Vector::Zero(size);
  state.second_moment = Vector::Zero(size);
  state.learning_rate = learning_rate;
  return state;
}

void adam_step(Vector& params, const Vector& grad, AdamState& state) {
  require(params.size() == grad.size() && params.size() == state.first_moment.size(),
          ErrorCode::dimension, "adam_step: size mismatch");

  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment.array().matrix() +
      (1.0 - state.beta2) * grad.cwiseProduct(grad);

  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  params.array() -= state.learning_rate *
                    (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + state.epsilon);
}

Matrix matrix_exponential(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::dimension, "matrix_exponential: matrix must be square");
  const Eigen::Index n = m.rows();
  if (n == 0) return Matrix(0, 0);

  // Scale so the infinity norm is at most 1/2, run the Taylor series, then
  // undo the scaling by repeated squaring.
  const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const Matrix scaled = m / std::pow(2.0, squarings);

  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  for (int k = 1; k <= 24; ++k) {
    term = (term * scaled) / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

double finite_difference_check(const std::function<double(const Vector&)>& loss_fn,
                               const Vector& params, const Vector& analytic_grad,
                               double step) {
  require(step > 0.0, ErrorCode::invalid_argument, "finite_difference_check: step must be positive");
  require(params.size() == analytic_grad.size(), ErrorCode::dimension,
          "finite_difference_check: gradient size mismatch");

  Vector probe = params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = loss_fn(probe);
    probe[i] = saved - step;
    const double down = loss_fn(probe);
    probe[i] = saved;

    const double numeric = (up - down) / (2.0 * step);
    const double analytic = analytic_grad[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

}  // namespace mmm
