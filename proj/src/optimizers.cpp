#include "fedsophia/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedsophia/errors.hpp"

namespace fedsophia {

void SophiaConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(clip_radius > 0.0)) throw ConfigError("clip radius must be > 0");
  if (hessian_interval < 1) throw ConfigError("hessian interval must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

ParamVector clip(const ParamVector& z, double rho) {
  ParamVector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::max(std::min(z[i], rho), -rho);
  return out;
}

ParamVector gnb_estimate(const Classifier& model, const ParamVector& theta,
                         const DenseMatrix& features, Rng& rng) {
  const std::size_t batch = features.rows();
  if (batch == 0) throw ShapeError("gnb_estimate: empty batch");
  const DenseMatrix probs = row_softmax(forward_logits(model, theta, features));

  // Upstream gradient of the mean cross-entropy against sampled labels is
  // (p - onehot(y_hat)) / B.
  DenseMatrix upstream = probs;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t r = 0; r < batch; ++r) {
    auto p = probs.row(r);
    const double u = unif(rng);
    std::size_t sampled = p.size() - 1;
    double cumulative = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      cumulative += p[c];
      if (u < cumulative) {
        sampled = c;
        break;
      }
    }
    upstream(r, sampled) -= 1.0;
    for (double& v : upstream.row(r)) v /= static_cast<double>(batch);
  }
  ParamVector g = model.backprop(theta, features, upstream);
  const double b = static_cast<double>(batch);
  for (double& v : g) v = b * v * v;
  return g;
}

ParamVector gauss_newton_diagonal(const Classifier& model, const ParamVector& theta,
                                  const DenseMatrix& features) {
  const std::size_t batch = features.rows();
  const std::size_t classes = model.class_count();
  if (batch == 0) throw ShapeError("gauss_newton_diagonal: empty batch");
  const DenseMatrix probs = row_softmax(forward_logits(model, theta, features));
  ParamVector diag(model.param_count());
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t idx[] = {r};
    const DenseMatrix x = features.gather_rows(idx);
    // Row c of the logits Jacobian, obtained by back-propagating e_c.
    std::vector<ParamVector> jac;
    jac.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      DenseMatrix unit(1, classes);
      unit(0, c) = 1.0;
      jac.push_back(model.backprop(theta, x, unit));
    }
    auto p = probs.row(r);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t e = 0; e < classes; ++e) {
        const double s = (c == e ? p[c] : 0.0) - p[c] * p[e];
        if (s == 0.0) continue;
        for (std::size_t k = 0; k < diag.size(); ++k) diag[k] += s * jac[c][k] * jac[e][k];
      }
    }
  }
  for (double& v : diag) v /= static_cast<double>(batch);
  return diag;
}

void update_gradient_ema(ParamVector& m, const ParamVector& g, double beta1) {
  if (m.size() != g.size()) throw ShapeError("gradient EMA: length mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
}

void update_hessian_ema(ParamVector& h, const ParamVector& h_hat, double beta2) {
  if (h.size() != h_hat.size()) throw ShapeError("Hessian EMA: length mismatch");
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = beta2 * h[i] + (1.0 - beta2) * h_hat[i];
}

ParamVector preconditioned_direction(const ParamVector& m, const ParamVector& h,
                                     double epsilon, double rho) {
  return clip(div(m, max_scalar(h, epsilon)), rho);
}

ParamVector apply_sophia_update(ParamVector& theta, const ParamVector& m, const ParamVector& h,
                                const SophiaConfig& cfg) {
  if (theta.size() != m.size()) throw ShapeError("sophia update: length mismatch");
  const double decay = cfg.learning_rate * cfg.weight_decay;
  for (double& v : theta) v -= decay * v;
  ParamVector update = scale(preconditioned_direction(m, h, cfg.epsilon, cfg.clip_radius),
                             cfg.learning_rate);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= update[i];
  return update;
}

SophiaStepInfo sophia_local_step(const Classifier& model, ParamVector& theta,
                                 OptimizerState& state, const SophiaConfig& cfg,
                                 const Batch& batch, Rng& gnb_rng) {
  SophiaStepInfo info;
  LossAndGradient lg = loss_and_gradient(model, theta, batch.features, batch.labels);
  info.loss = lg.loss;
  update_gradient_ema(state.m, lg.gradient, cfg.beta1);
  if (state.step % cfg.hessian_interval == 0) {
    update_hessian_ema(state.h, gnb_estimate(model, theta, batch.features, gnb_rng), cfg.beta2);
    info.hessian_refreshed = true;
  }
  info.update = apply_sophia_update(theta, state.m, state.h, cfg);
  ++state.step;
  return info;
}

ParamVector fedavg_local_step(const Classifier& model, const ParamVector& theta, double eta,
                              const Batch& batch) {
  if (!(eta > 0.0)) throw DomainError("fedavg_local_step: learning rate must be > 0");
  ParamVector next = theta;
  axpy(-eta, gradient(model, theta, batch), next);
  return next;
}

ParamVector hessian_vector_product(const GradientFn& grad, const ParamVector& theta,
                                   const ParamVector& v) {
  if (theta.size() != v.size()) throw ShapeError("hessian_vector_product: length mismatch");
  if (!all_finite(v.span())) throw DomainError("hessian_vector_product: non-finite direction");
  const double delta = 1e-4 / std::max(1.0, norm_inf(v));
  ParamVector plus = theta;
  ParamVector minus = theta;
  axpy(delta, v, plus);
  axpy(-delta, v, minus);
  ParamVector hv = sub(grad(plus), grad(minus));
  for (double& x : hv) x /= 2.0 * delta;
  return hv;
}

ParamVector hessian_vector_product(const Classifier& model, const ParamVector& theta,
                                   const Batch& batch, const ParamVector& v) {
  return hessian_vector_product(
      [&](const ParamVector& t) { return gradient(model, t, batch); }, theta, v);
}

ParamVector done_local_direction(const GradientFn& grad, const ParamVector& theta,
                                 const ParamVector& global_gradient, double alpha,
                                 std::size_t iterations) {
  if (!(alpha > 0.0)) throw DomainError("Richardson step size must be > 0");
  if (iterations < 1) throw DomainError("Richardson iteration count must be >= 1");
  ParamVector d(theta.size());
  for (std::size_t r = 0; r < iterations; ++r) {
    ParamVector residual = global_gradient;
    if (r > 0) residual = sub(residual, hessian_vector_product(grad, theta, d));
    axpy(alpha, residual, d);
    if (!(norm_inf(d) <= kRichardsonDivergenceBound)) {
      throw DivergenceError("Richardson iteration diverged after " + std::to_string(r + 1) +
                            " iterations (step size " + std::to_string(alpha) +
                            " too large?)");
    }
  }
  return d;
}

ParamVector done_local_direction(const Classifier& model, const ParamVector& theta,
                                 const ParamVector& global_gradient, const Batch& batch,
                                 double alpha, std::size_t iterations) {
  return done_local_direction([&](const ParamVector& t) { return gradient(model, t, batch); },
                              theta, global_gradient, alpha, iterations);
}

}  // namespace fedsophia
