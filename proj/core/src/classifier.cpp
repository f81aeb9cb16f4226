#include "mpreuse/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mpreuse/random.hpp"

namespace mpreuse {
namespace {

Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

// d loss / d logits for a softmax output given d loss / d probabilities.
Vector softmax_backward(const Vector& p, const Vector& upstream) {
  return (p.array() * (upstream.array() - p.dot(upstream))).matrix();
}

void glorot(Matrix& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
  }
}

void append_row_major(Vector& out, Eigen::Index& at, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[at++] = m(r, c);
  }
}

void read_row_major(const Vector& in, Eigen::Index& at, Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[at++];
  }
}

void check_upstream(const Vector& upstream, std::size_t k) {
  if (static_cast<std::size_t>(upstream.size()) != k) {
    throw InvalidArgument("posterior_grad: upstream has length " + std::to_string(upstream.size()) +
                          ", expected " + std::to_string(k));
  }
}

void check_param_size(const Vector& params, std::size_t expected, std::string_view who) {
  if (static_cast<std::size_t>(params.size()) != expected) {
    throw InvalidArgument(std::string(who) + ": expected " + std::to_string(expected) + " parameters, got " +
                          std::to_string(params.size()));
  }
  if (!params.allFinite()) throw InvalidArgument(std::string(who) + ": non-finite parameter");
}

}  // namespace

Classifier::Classifier(std::vector<ClassLabel> label_space, std::size_t input_dim)
    : label_space_(std::move(label_space)), input_dim_(input_dim) {
  std::sort(label_space_.begin(), label_space_.end());
  if (label_space_.empty()) throw InvalidArgument("classifier label space is empty");
  if (std::adjacent_find(label_space_.begin(), label_space_.end()) != label_space_.end()) {
    throw InvalidArgument("classifier label space has duplicates");
  }
  if (label_space_.front() < 0) throw InvalidArgument("classifier label space has a negative class");
  if (input_dim_ == 0) throw InvalidArgument("classifier input dimension must be positive");
}

std::optional<std::size_t> Classifier::local_index(ClassLabel global) const {
  auto it = std::lower_bound(label_space_.begin(), label_space_.end(), global);
  if (it == label_space_.end() || *it != global) return std::nullopt;
  return static_cast<std::size_t>(it - label_space_.begin());
}

void Classifier::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim_) {
    throw InvalidArgument("classifier input has dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(input_dim_));
  }
}

// ---------------------------------------------------------------------------
// SoftmaxRegression

SoftmaxRegression::SoftmaxRegression(std::vector<ClassLabel> label_space, std::size_t input_dim, std::uint64_t seed)
    : Classifier(std::move(label_space), input_dim) {
  reinitialize(seed);
}

SoftmaxRegression::SoftmaxRegression(std::vector<ClassLabel> label_space, Matrix weights, Vector bias)
    : Classifier(std::move(label_space), static_cast<std::size_t>(weights.cols())),
      weights_(std::move(weights)),
      bias_(std::move(bias)) {
  if (static_cast<std::size_t>(weights_.rows()) != num_local_classes() || bias_.size() != weights_.rows()) {
    throw InvalidArgument("softmax regression shapes do not match the label space");
  }
  if (!weights_.allFinite() || !bias_.allFinite()) throw InvalidArgument("softmax regression parameters must be finite");
}

void SoftmaxRegression::reinitialize(std::uint64_t seed) {
  Rng rng(seed);
  weights_.resize(static_cast<Eigen::Index>(num_local_classes()), static_cast<Eigen::Index>(input_dim()));
  glorot(weights_, rng);
  bias_ = Vector::Zero(static_cast<Eigen::Index>(num_local_classes()));
}

Vector SoftmaxRegression::posterior(const Vector& x) const {
  check_input(x);
  return softmax(weights_ * x + bias_);
}

Vector SoftmaxRegression::grad_from_logits(const Vector& x, const Vector& dlogits) const {
  Vector g(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  append_row_major(g, at, dlogits * x.transpose());
  g.tail(bias_.size()) = dlogits;
  return g;
}

Vector SoftmaxRegression::posterior_grad(const Vector& x, const Vector& upstream) const {
  check_upstream(upstream, num_local_classes());
  return grad_from_logits(x, softmax_backward(posterior(x), upstream));
}

Vector SoftmaxRegression::cross_entropy_grad(const Vector& x, std::size_t local_label) const {
  Vector d = posterior(x);
  d[static_cast<Eigen::Index>(local_label)] -= 1.0;
  return grad_from_logits(x, d);
}

std::size_t SoftmaxRegression::num_params() const {
  return static_cast<std::size_t>(weights_.size() + bias_.size());
}

Vector SoftmaxRegression::parameters() const {
  Vector p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  append_row_major(p, at, weights_);
  p.tail(bias_.size()) = bias_;
  return p;
}

void SoftmaxRegression::set_parameters(const Vector& params) {
  check_param_size(params, num_params(), "SoftmaxRegression::set_parameters");
  Eigen::Index at = 0;
  read_row_major(params, at, weights_);
  bias_ = params.tail(bias_.size());
}

// ---------------------------------------------------------------------------
// MlpClassifier

MlpClassifier::MlpClassifier(std::vector<ClassLabel> label_space, std::size_t input_dim,
                             std::vector<std::size_t> hidden, std::uint64_t seed)
    : Classifier(std::move(label_space), input_dim) {
  std::size_t in = input_dim;
  hidden.push_back(num_local_classes());
  for (std::size_t out : hidden) {
    if (out == 0) throw InvalidArgument("MLP layer width must be positive");
    layers_.push_back({Matrix(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                       Vector(static_cast<Eigen::Index>(out))});
    in = out;
  }
  reinitialize(seed);
}

MlpClassifier::MlpClassifier(std::vector<ClassLabel> label_space, std::vector<DenseLayer> layers)
    : Classifier(std::move(label_space),
                 layers.empty() ? std::size_t{0} : static_cast<std::size_t>(layers.front().weights.cols())),
      layers_(std::move(layers)) {
  Eigen::Index in = static_cast<Eigen::Index>(input_dim());
  for (const auto& layer : layers_) {
    if (layer.weights.cols() != in || layer.bias.size() != layer.weights.rows()) {
      throw InvalidArgument("MLP layer dimensions do not chain");
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) throw InvalidArgument("MLP parameters must be finite");
    in = layer.weights.rows();
  }
  if (static_cast<std::size_t>(in) != num_local_classes()) {
    throw InvalidArgument("MLP output width does not match the label space");
  }
}

void MlpClassifier::reinitialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : layers_) {
    glorot(layer.weights, rng);
    layer.bias.setZero();
  }
}

std::vector<std::size_t> MlpClassifier::hidden_sizes() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) out.push_back(static_cast<std::size_t>(layers_[l].weights.rows()));
  return out;
}

Vector MlpClassifier::forward(const Vector& x, std::vector<Vector>& activations) const {
  check_input(x);
  activations.clear();
  activations.push_back(x);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    activations.push_back((layers_[l].weights * activations.back() + layers_[l].bias).array().tanh().matrix());
  }
  return layers_.back().weights * activations.back() + layers_.back().bias;
}

Vector MlpClassifier::backward(const std::vector<Vector>& activations, const Vector& dlogits) const {
  Vector g(static_cast<Eigen::Index>(num_params()));
  // Offsets of each layer's block in the flat layout.
  std::vector<Eigen::Index> offset(layers_.size());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offset[l] = at;
    at += layers_[l].weights.size() + layers_[l].bias.size();
  }
  Vector delta = dlogits;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    Eigen::Index pos = offset[l];
    append_row_major(g, pos, delta * activations[l].transpose());
    g.segment(pos, delta.size()) = delta;
    if (l > 0) {
      delta = ((layers_[l].weights.transpose() * delta).array() * (1.0 - activations[l].array().square())).matrix();
    }
  }
  return g;
}

Vector MlpClassifier::posterior(const Vector& x) const {
  std::vector<Vector> acts;
  return softmax(forward(x, acts));
}

Vector MlpClassifier::posterior_grad(const Vector& x, const Vector& upstream) const {
  check_upstream(upstream, num_local_classes());
  std::vector<Vector> acts;
  const Vector p = softmax(forward(x, acts));
  return backward(acts, softmax_backward(p, upstream));
}

Vector MlpClassifier::cross_entropy_grad(const Vector& x, std::size_t local_label) const {
  std::vector<Vector> acts;
  Vector d = softmax(forward(x, acts));
  d[static_cast<Eigen::Index>(local_label)] -= 1.0;
  return backward(acts, d);
}

std::size_t MlpClassifier::num_params() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  return n;
}

Vector MlpClassifier::parameters() const {
  Vector p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index at = 0;
  for (const auto& layer : layers_) {
    append_row_major(p, at, layer.weights);
    p.segment(at, layer.bias.size()) = layer.bias;
    at += layer.bias.size();
  }
  return p;
}

void MlpClassifier::set_parameters(const Vector& params) {
  check_param_size(params, num_params(), "MlpClassifier::set_parameters");
  Eigen::Index at = 0;
  for (auto& layer : layers_) {
    read_row_major(params, at, layer.weights);
    layer.bias = params.segment(at, layer.bias.size());
    at += layer.bias.size();
  }
}

// ---------------------------------------------------------------------------

Vector global_posterior(const Classifier& model, const Vector& x, int num_classes) {
  const auto& labels = model.label_space();
  if (num_classes < 1 || static_cast<std::size_t>(num_classes) < labels.size() || labels.back() >= num_classes) {
    throw InvalidArgument("global_posterior: label space does not fit in " + std::to_string(num_classes) + " classes");
  }
  const Vector local = model.posterior(x);
  Vector out = Vector::Zero(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]] = local[static_cast<Eigen::Index>(i)];
  return out;
}

namespace {

std::vector<std::size_t> local_labels(const Classifier& model, const LocalDataset& ds) {
  std::vector<std::size_t> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples()) {
    auto idx = model.local_index(s.label);
    if (!idx) {
      throw InvalidArgument("training label " + std::to_string(s.label) + " is outside the classifier's label space");
    }
    out.push_back(*idx);
  }
  return out;
}

}  // namespace

std::vector<double> train(Classifier& model, const LocalDataset& ds, const TrainOptions& options) {
  if (ds.empty()) throw InvalidArgument("train: empty dataset");
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be positive");
  if (options.batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  const auto targets = local_labels(model, ds);
  Rng rng(options.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> history;
  history.reserve(options.epochs);
  Vector params = model.parameters();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      Vector g = Vector::Zero(params.size());
      for (std::size_t b = start; b < end; ++b) g += model.cross_entropy_grad(ds[order[b]].features, targets[order[b]]);
      params -= (options.learning_rate / static_cast<double>(end - start)) * g;
      model.set_parameters(params);
    }
    history.push_back(mean_cross_entropy(model, ds));
  }
  return history;
}

double mean_cross_entropy(const Classifier& model, const LocalDataset& ds) {
  if (ds.empty()) return 0.0;
  const auto targets = local_labels(model, ds);
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double p = model.posterior(ds[i].features)[static_cast<Eigen::Index>(targets[i])];
    total -= std::log(std::max(p, 1e-300));
  }
  return total / static_cast<double>(ds.size());
}

double accuracy(const Classifier& model, const LocalDataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : ds.samples()) {
    if (static_cast<ClassLabel>(argmax(global_posterior(model, s.features, ds.num_classes()))) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace mpreuse
