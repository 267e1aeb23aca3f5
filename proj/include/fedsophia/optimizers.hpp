#pragma once

// Local update rules run on each device: the clipped, EMA-smoothed,
// diagonal-Hessian-preconditioned step with its Gauss-Newton-Bartlett
// curvature estimate, plain SGD, and the Richardson-iteration Newton
// direction used by the DONE baseline.

#include <cstddef>
#include <cstdint>
#include <functional>

#include "fedsophia/linalg.hpp"
#include "fedsophia/models.hpp"
#include "fedsophia/rng.hpp"

namespace fedsophia {

struct SophiaConfig {
  double learning_rate = 0.01;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-12;
  double clip_radius = 1.0;
  /// Refresh the Hessian estimate when the local step counter is a multiple of this.
  std::size_t hessian_interval = 5;
  std::size_t local_iters = 10;
  std::size_t batch_size = 512;
  /// Zero m, h and the step counter whenever a device receives the global model.
  bool reset_state_each_round = false;

  void validate() const;
};

struct OptimizerState {
  ParamVector m;  ///< EMA of gradients
  ParamVector h;  ///< EMA of Hessian-diagonal estimates, entries >= 0
  std::uint64_t step = 0;

  static OptimizerState zeros(std::size_t dim) { return {ParamVector(dim), ParamVector(dim), 0}; }
};

/// Componentwise max(min(z, rho), -rho).
ParamVector clip(const ParamVector& z, double rho);

/// One Gauss-Newton-Bartlett draw: sample labels from the model's own
/// softmax, take the gradient g of the mean cross-entropy against them and
/// return B * g (.) g.
ParamVector gnb_estimate(const Classifier& model, const ParamVector& theta,
                         const DenseMatrix& features, Rng& rng);

/// Exact diagonal of the Gauss-Newton matrix J^T S J of the mean
/// cross-entropy, where S is the softmax Hessian in logit space. O(B C^2 d).
ParamVector gauss_newton_diagonal(const Classifier& model, const ParamVector& theta,
                                  const DenseMatrix& features);

/// m <- beta1 m + (1 - beta1) g
void update_gradient_ema(ParamVector& m, const ParamVector& g, double beta1);
/// h <- beta2 h + (1 - beta2) h_hat
void update_hessian_ema(ParamVector& h, const ParamVector& h_hat, double beta2);

/// clip(m / max(h, epsilon), rho)
ParamVector preconditioned_direction(const ParamVector& m, const ParamVector& h,
                                     double epsilon, double rho);

struct SophiaStepInfo {
  double loss = 0.0;
  bool hessian_refreshed = false;
  /// Displacement applied after weight decay: eta * clip(...).
  ParamVector update;
};

/// Weight decay followed by the clipped preconditioned step. Returns the
/// displacement subtracted after the decay.
ParamVector apply_sophia_update(ParamVector& theta, const ParamVector& m, const ParamVector& h,
                                const SophiaConfig& cfg);

/// One local iteration: gradient EMA, Hessian refresh when
/// step % hessian_interval == 0, weight decay, clipped step, counter + 1.
SophiaStepInfo sophia_local_step(const Classifier& model, ParamVector& theta,
                                 OptimizerState& state, const SophiaConfig& cfg,
                                 const Batch& batch, Rng& gnb_rng);

/// theta - eta * gradient(theta, batch)
ParamVector fedavg_local_step(const Classifier& model, const ParamVector& theta, double eta,
                              const Batch& batch);

using GradientFn = std::function<ParamVector(const ParamVector&)>;

/// Central difference of gradients along v with step 1e-4 / max(1, |v|_inf).
ParamVector hessian_vector_product(const GradientFn& grad, const ParamVector& theta,
                                   const ParamVector& v);
ParamVector hessian_vector_product(const Classifier& model, const ParamVector& theta,
                                   const Batch& batch, const ParamVector& v);

inline constexpr double kRichardsonDivergenceBound = 1e8;

/// Richardson iteration d <- d + alpha (g - H d) from d = 0, `iterations`
/// times. Throws DivergenceError once |d|_inf exceeds 1e8.
ParamVector done_local_direction(const GradientFn& grad, const ParamVector& theta,
                                 const ParamVector& global_gradient, double alpha,
                                 std::size_t iterations);
ParamVector done_local_direction(const Classifier& model, const ParamVector& theta,
                                 const ParamVector& global_gradient, const Batch& batch,
                                 double alpha, std::size_t iterations);

}  // namespace fedsophia
