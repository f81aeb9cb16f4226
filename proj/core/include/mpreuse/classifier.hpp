#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "mpreuse/common.hpp"
#include "mpreuse/data.hpp"

namespace mpreuse {

/// Probabilistic classifier F over a local label space.
///
/// posterior() returns a probability vector indexed by position in
/// label_space(), not by global class. Parameters are exposed as one flat
/// vector so that calibration can treat every party uniformly.
class Classifier {
 public:
  Classifier(std::vector<ClassLabel> label_space, std::size_t input_dim);
  virtual ~Classifier() = default;

  virtual std::unique_ptr<Classifier> clone() const = 0;
  virtual std::string_view kind() const = 0;

  const std::vector<ClassLabel>& label_space() const { return label_space_; }
  std::size_t num_local_classes() const { return label_space_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  // Position of a global label inside label_space(), if present.
  std::optional<std::size_t> local_index(ClassLabel global) const;

  virtual Vector posterior(const Vector& x) const = 0;
  // J^T upstream, where J = d posterior(x) / d parameters().
  virtual Vector posterior_grad(const Vector& x, const Vector& upstream) const = 0;
  // Gradient of -log posterior(x)[local_label] w.r.t. parameters().
  virtual Vector cross_entropy_grad(const Vector& x, std::size_t local_label) const = 0;

  virtual std::size_t num_params() const = 0;
  virtual Vector parameters() const = 0;
  virtual void set_parameters(const Vector& params) = 0;
  // Fresh Glorot-uniform weights and zero biases.
  virtual void reinitialize(std::uint64_t seed) = 0;

 protected:
  void check_input(const Vector& x) const;

 private:
  std::vector<ClassLabel> label_space_;
  std::size_t input_dim_;
};

/// Multinomial logistic regression: softmax(W x + b), W is |Y_i| x d.
class SoftmaxRegression final : public Classifier {
 public:
  SoftmaxRegression(std::vector<ClassLabel> label_space, std::size_t input_dim, std::uint64_t seed = 0);
  SoftmaxRegression(std::vector<ClassLabel> label_space, Matrix weights, Vector bias);

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<SoftmaxRegression>(*this); }
  std::string_view kind() const override { return "softmax"; }

  Vector posterior(const Vector& x) const override;
  Vector posterior_grad(const Vector& x, const Vector& upstream) const override;
  Vector cross_entropy_grad(const Vector& x, std::size_t local_label) const override;

  std::size_t num_params() const override;
  Vector parameters() const override;
  void set_parameters(const Vector& params) override;
  void reinitialize(std::uint64_t seed) override;

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }

 private:
  // Parameter gradient given d loss / d logits.
  Vector grad_from_logits(const Vector& x, const Vector& dlogits) const;

  Matrix weights_;
  Vector bias_;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
};

/// Fully connected network: tanh hidden layers, softmax output.
class MlpClassifier final : public Classifier {
 public:
  MlpClassifier(std::vector<ClassLabel> label_space, std::size_t input_dim, std::vector<std::size_t> hidden,
                std::uint64_t seed = 0);
  MlpClassifier(std::vector<ClassLabel> label_space, std::vector<DenseLayer> layers);

  std::unique_ptr<Classifier> clone() const override { return std::make_unique<MlpClassifier>(*this); }
  std::string_view kind() const override { return "mlp"; }

  Vector posterior(const Vector& x) const override;
  Vector posterior_grad(const Vector& x, const Vector& upstream) const override;
  Vector cross_entropy_grad(const Vector& x, std::size_t local_label) const override;

  std::size_t num_params() const override;
  Vector parameters() const override;
  void set_parameters(const Vector& params) override;
  void reinitialize(std::uint64_t seed) override;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<std::size_t> hidden_sizes() const;

 private:
  // activations[0] = x, activations[l] = tanh(z_l) for hidden layers; returns output logits.
  Vector forward(const Vector& x, std::vector<Vector>& activations) const;
  Vector backward(const std::vector<Vector>& activations, const Vector& dlogits) const;

  std::vector<DenseLayer> layers_;
};

/// Posterior over all K global classes: local entries at their global
/// positions, exact zeros for classes outside the label space.
Vector global_posterior(const Classifier& model, const Vector& x, int num_classes);

struct TrainOptions {
  double learning_rate = 1e-4;
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

/// Mini-batch SGD on mean cross-entropy. Returns the mean training
/// cross-entropy after each epoch. Throws if a sample label is outside the
/// model's label space.
std::vector<double> train(Classifier& model, const LocalDataset& ds, const TrainOptions& options);

double mean_cross_entropy(const Classifier& model, const LocalDataset& ds);
// Fraction of samples whose global argmax (zero-filled) equals the label.
double accuracy(const Classifier& model, const LocalDataset& ds);

}  // namespace mpreuse
