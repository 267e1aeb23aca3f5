#include "fedsophia/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsophia/errors.hpp"

namespace fedsophia {

namespace {

void check_inputs(const Classifier& model, const ParamVector& theta,
                  const DenseMatrix& features) {
  if (theta.size() != model.param_count()) {
    throw ShapeError("parameter vector has length " + std::to_string(theta.size()) +
                     ", model expects " + std::to_string(model.param_count()));
  }
  if (features.cols() != model.input_dim()) {
    throw ShapeError("features have " + std::to_string(features.cols()) +
                     " columns, model expects " + std::to_string(model.input_dim()));
  }
}

void check_labels(const Classifier& model, const DenseMatrix& features,
                  std::span<const Label> labels) {
  if (labels.size() != features.rows()) {
    throw ShapeError("batch has " + std::to_string(features.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ShapeError("empty batch");
  for (Label y : labels) {
    if (y >= model.class_count()) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(model.class_count()) + ")");
    }
  }
}

}  // namespace

std::size_t MlpSpec::param_count() const {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    total += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return total;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("MLP needs at least an input and output layer");
  for (std::size_t n : layer_sizes) {
    if (n == 0) throw ShapeError("MLP layer width must be >= 1");
  }
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  param_count_ = spec_.param_count();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    offsets_.push_back(offset);
    offset += spec_.layer_sizes[l] * spec_.layer_sizes[l + 1] + spec_.layer_sizes[l + 1];
  }
}

std::size_t Mlp::bias_offset(std::size_t layer) const {
  return offsets_[layer] + spec_.layer_sizes[layer] * spec_.layer_sizes[layer + 1];
}

// Returns the post-activation outputs of every layer; element 0 is the input
// and the last element holds the logits.
std::vector<DenseMatrix> Mlp::forward_all(const ParamVector& theta,
                                          const DenseMatrix& features) const {
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  const std::size_t batch = features.rows();
  std::vector<DenseMatrix> acts;
  acts.reserve(layers + 1);
  acts.push_back(features);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_in = spec_.layer_sizes[l];
    const std::size_t n_out = spec_.layer_sizes[l + 1];
    const double* w = theta.data() + weight_offset(l);
    const double* b = theta.data() + bias_offset(l);
    const DenseMatrix& in = acts.back();
    DenseMatrix out(batch, n_out);
    for (std::size_t r = 0; r < batch; ++r) {
      auto dst = out.row(r);
      std::copy(b, b + n_out, dst.begin());
      auto src = in.row(r);
      for (std::size_t i = 0; i < n_in; ++i) {
        const double x = src[i];
        if (x == 0.0) continue;
        const double* wi = w + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) dst[j] += x * wi[j];
      }
      if (l + 1 < layers) {
        for (double& v : dst) v = v > 0.0 ? v : 0.0;
      }
    }
    acts.push_back(std::move(out));
  }
  return acts;
}

DenseMatrix Mlp::logits(const ParamVector& theta, const DenseMatrix& features) const {
  return std::move(forward_all(theta, features).back());
}

ParamVector Mlp::backprop(const ParamVector& theta, const DenseMatrix& features,
                          const DenseMatrix& upstream) const {
  const std::vector<DenseMatrix> acts = forward_all(theta, features);
  const std::size_t layers = spec_.layer_sizes.size() - 1;
  const std::size_t batch = features.rows();
  ParamVector grad(param_count_);

  DenseMatrix delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t n_in = spec_.layer_sizes[l];
    const std::size_t n_out = spec_.layer_sizes[l + 1];
    const DenseMatrix& in = acts[l];
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    for (std::size_t r = 0; r < batch; ++r) {
      auto d = delta.row(r);
      auto x = in.row(r);
      for (std::size_t j = 0; j < n_out; ++j) gb[j] += d[j];
      for (std::size_t i = 0; i < n_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* gwi = gw + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) gwi[j] += xi * d[j];
      }
    }
    if (l == 0) break;

    // delta_prev = (delta W^T) masked by the ReLU derivative (0 at 0).
    const double* w = theta.data() + weight_offset(l);
    DenseMatrix prev(batch, n_in);
    for (std::size_t r = 0; r < batch; ++r) {
      auto d = delta.row(r);
      auto x = in.row(r);
      auto p = prev.row(r);
      for (std::size_t i = 0; i < n_in; ++i) {
        if (x[i] <= 0.0) continue;
        const double* wi = w + i * n_out;
        double s = 0.0;
        for (std::size_t j = 0; j < n_out; ++j) s += wi[j] * d[j];
        p[i] = s;
      }
    }
    delta = std::move(prev);
  }
  return grad;
}

double Mlp::flops_per_sample() const {
  double macs = 0.0;
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    macs += static_cast<double>(spec_.layer_sizes[l] * spec_.layer_sizes[l + 1]);
  }
  // Forward is one multiply-add per weight; backward is two (input and weight gradients).
  return 2.0 * 3.0 * macs;
}

ParamVector Mlp::initial_params(Rng& rng) const {
  ParamVector theta(param_count_);
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    const double n_in = static_cast<double>(spec_.layer_sizes[l]);
    const double n_out = static_cast<double>(spec_.layer_sizes[l + 1]);
    const double limit = std::sqrt(6.0 / (n_in + n_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const std::size_t begin = weight_offset(l);
    const std::size_t end = bias_offset(l);
    for (std::size_t k = begin; k < end; ++k) theta[k] = dist(rng);
  }
  return theta;
}

DenseMatrix BinaryLogitModel::logits(const ParamVector& theta,
                                     const DenseMatrix& features) const {
  DenseMatrix out(features.rows(), 2);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    double z = theta[input_dim_];
    auto x = features.row(r);
    for (std::size_t i = 0; i < input_dim_; ++i) z += theta[i] * x[i];
    out(r, 1) = z;
  }
  return out;
}

ParamVector BinaryLogitModel::backprop(const ParamVector& /*theta*/,
                                       const DenseMatrix& features,
                                       const DenseMatrix& upstream) const {
  ParamVector grad(param_count());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const double d = upstream(r, 1);
    auto x = features.row(r);
    for (std::size_t i = 0; i < input_dim_; ++i) grad[i] += d * x[i];
    grad[input_dim_] += d;
  }
  return grad;
}

DenseMatrix forward_logits(const Classifier& model, const ParamVector& theta,
                           const DenseMatrix& features) {
  check_inputs(model, theta, features);
  return model.logits(theta, features);
}

double cross_entropy(const DenseMatrix& logits, std::span<const Label> labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    total += peak + std::log(sum) - z[labels[r]];
  }
  return total / static_cast<double>(logits.rows());
}

LossAndGradient loss_and_gradient(const Classifier& model, const ParamVector& theta,
                                  const DenseMatrix& features, std::span<const Label> labels) {
  check_inputs(model, theta, features);
  check_labels(model, features, labels);
  const DenseMatrix z = model.logits(theta, features);
  DenseMatrix upstream = row_softmax(z);
  const double inv_batch = 1.0 / static_cast<double>(features.rows());
  for (std::size_t r = 0; r < upstream.rows(); ++r) {
    upstream(r, labels[r]) -= 1.0;
    for (double& v : upstream.row(r)) v *= inv_batch;
  }
  return {cross_entropy(z, labels), model.backprop(theta, features, upstream)};
}

double loss(const Classifier& model, const ParamVector& theta, const Batch& batch) {
  check_inputs(model, theta, batch.features);
  check_labels(model, batch.features, batch.labels);
  return cross_entropy(model.logits(theta, batch.features), batch.labels);
}

ParamVector gradient(const Classifier& model, const ParamVector& theta, const Batch& batch) {
  return loss_and_gradient(model, theta, batch.features, batch.labels).gradient;
}

std::vector<Label> argmax_rows(const DenseMatrix& logits) {
  std::vector<Label> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto z = logits.row(r);
    // max_element returns the first maximum, which is the documented tie-break.
    out[r] = static_cast<Label>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

std::vector<Label> predict(const Classifier& model, const ParamVector& theta,
                           const DenseMatrix& features) {
  return argmax_rows(forward_logits(model, theta, features));
}

}  // namespace fedsophia
