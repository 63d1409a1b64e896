#pragma once

#include <Eigen/Dense>
#include <functional>

namespace mmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Huber loss specification: quadratic for |r| <= delta, linear beyond.
struct HuberSpec {
  double delta = 1.0;
};

struct HuberResult {
  double loss = 0.0;  // mean over elements
  Vector grad;        // d(mean loss)/d residual
};

/// Mean Huber loss and its gradient with respect to the residual vector.
/// Per element: 0.5 r^2 if |r| <= delta, else delta (|r| - 0.5 delta).
HuberResult huber_loss(const Vector& residuals, const HuberSpec& spec);

/// Scales the vector down so its L2 norm does not exceed max_norm.
/// Direction is preserved; vectors already within the bound pass unchanged.
Vector clip_gradient_norm(Vector grad, double max_norm);

/// State for the bias-corrected adaptive-moment optimizer.
struct AdamState {
  long step_count = 0;
  Vector first_moment;
  Vector second_moment;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState make(Eigen::Index size, double learning_rate = 0.01);
};

/// One bias-corrected adaptive-moment descent step, in place.
/// Deterministic; callers must not share one state across concurrent steps.
void adam_step(Vector& params, const Vector& grad, AdamState& state);

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
/// Intended for the small dense matrices used by the structure learner.
Matrix matrix_exponential(const Matrix& m);

/// Max relative error between an analytic gradient and central finite
/// differences of loss_fn at params. Relative error per coordinate uses
/// denominator max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const std::function<double(const Vector&)>& loss_fn,
                               const Vector& params, const Vector& analytic_grad,
                               double step);

}  // namespace mmm
