#pragma once

// Classifiers evaluated over a flat ParamVector.
//
// Optimizers never see layer structure: a model maps (theta, features) to a
// B x C logits matrix and back-propagates an upstream logits gradient to a
// ParamVector. Loss, gradient and prediction are free functions on top of
// that pair.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsophia/linalg.hpp"
#include "fedsophia/rng.hpp"

namespace fedsophia {

using Label = std::uint32_t;

struct Batch {
  DenseMatrix features;
  std::vector<Label> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::size_t param_count() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t class_count() const = 0;

  /// B x C raw outputs. Shapes are checked by the free functions below.
  virtual DenseMatrix logits(const ParamVector& theta, const DenseMatrix& features) const = 0;

  /// Gradient with respect to theta of sum_{b,c} upstream(b,c) * logits(b,c).
  virtual ParamVector backprop(const ParamVector& theta, const DenseMatrix& features,
                               const DenseMatrix& upstream) const = 0;

  /// Floating point operations for one forward plus backward pass of one sample.
  virtual double flops_per_sample() const = 0;
};

struct MlpSpec {
  /// Input width, hidden widths..., class count.
  std::vector<std::size_t> layer_sizes;

  std::size_t param_count() const;
  /// Throws ShapeError unless there are >= 2 layers, all of width >= 1.
  void validate() const;
};

/// Fully connected network, ReLU on hidden layers and identity on the output.
///
/// Parameter packing, layer by layer: the n_in x n_out weight block stored
/// row-major with the input index major (W[i][j] at offset i*n_out + j),
/// followed by the n_out biases.
class Mlp final : public Classifier {
 public:
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const noexcept { return spec_; }

  std::size_t param_count() const override { return param_count_; }
  std::size_t input_dim() const override { return spec_.layer_sizes.front(); }
  std::size_t class_count() const override { return spec_.layer_sizes.back(); }

  DenseMatrix logits(const ParamVector& theta, const DenseMatrix& features) const override;
  ParamVector backprop(const ParamVector& theta, const DenseMatrix& features,
                       const DenseMatrix& upstream) const override;
  double flops_per_sample() const override;

  /// Glorot-uniform weights, zero biases.
  ParamVector initial_params(Rng& rng) const;

  /// Offset of layer l's weight block inside the packed vector.
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

 private:
  std::vector<DenseMatrix> forward_all(const ParamVector& theta,
                                       const DenseMatrix& features) const;

  MlpSpec spec_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> offsets_;
};

/// Two-class linear softmax model with logits (0, w.x + b). It has
/// input_dim + 1 parameters: w followed by b.
class BinaryLogitModel final : public Classifier {
 public:
  explicit BinaryLogitModel(std::size_t input_dim) : input_dim_(input_dim) {}

  std::size_t param_count() const override { return input_dim_ + 1; }
  std::size_t input_dim() const override { return input_dim_; }
  std::size_t class_count() const override { return 2; }

  DenseMatrix logits(const ParamVector& theta, const DenseMatrix& features) const override;
  ParamVector backprop(const ParamVector& theta, const DenseMatrix& features,
                       const DenseMatrix& upstream) const override;
  double flops_per_sample() const override { return 6.0 * static_cast<double>(input_dim_); }

 private:
  std::size_t input_dim_;
};

struct LossAndGradient {
  double loss = 0.0;
  ParamVector gradient;
};

DenseMatrix forward_logits(const Classifier& model, const ParamVector& theta,
                           const DenseMatrix& features);

/// Mean softmax cross-entropy over the batch.
double loss(const Classifier& model, const ParamVector& theta, const Batch& batch);

ParamVector gradient(const Classifier& model, const ParamVector& theta, const Batch& batch);

LossAndGradient loss_and_gradient(const Classifier& model, const ParamVector& theta,
                                  const DenseMatrix& features, std::span<const Label> labels);

/// Argmax of each logits row; ties go to the lowest class index.
std::vector<Label> predict(const Classifier& model, const ParamVector& theta,
                           const DenseMatrix& features);
std::vector<Label> argmax_rows(const DenseMatrix& logits);

/// Mean cross-entropy of precomputed logits against labels.
double cross_entropy(const DenseMatrix& logits, std::span<const Label> labels);

}  // namespace fedsophia
