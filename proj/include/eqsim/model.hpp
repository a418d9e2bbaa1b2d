// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Toy dual encoder: one linear map per modality with an optional tanh hidden
// layer, a learned log-temperature, hand-written backpropagation of the total
// loss and a central-difference oracle to check it against.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "eqsim/core.hpp"
#include "eqsim/losses.hpp"
#include "eqsim/random.hpp"

namespace eqsim {

struct ModelShape {
  Index d_img = 0;
  Index d_txt = 0;
  Index embed_dim = 0;
  Index hidden_img = 0;  // 0 means no hidden layer
  Index hidden_txt = 0;

  bool operator==(const ModelShape&) const = default;
};

template <typename Scalar>
struct Tower {
  Matrix<Scalar> hidden_weights;  // hidden x input, empty without a hidden layer
  Vector<Scalar> hidden_bias;
  Matrix<Scalar> weights;  // embed x (hidden or input)

  bool has_hidden() const { return hidden_weights.size() > 0; }
  Index input_dim() const { return has_hidden() ? hidden_weights.cols() : weights.cols(); }

  template <typename To>
  Tower<To> cast() const {
    return {hidden_weights.template cast<To>(), hidden_bias.template cast<To>(), weights.template cast<To>()};
  }
};

template <typename Scalar>
struct BasicEncoderParams {
  Tower<Scalar> image;
  Tower<Scalar> text;
  Scalar log_temperature{};

  const Tower<Scalar>& tower(Modality m) const { return m == Modality::image ? image : text; }
  Tower<Scalar>& tower(Modality m) { return m == Modality::image ? image : text; }

  ModelShape shape() const {
    return {image.input_dim(), text.input_dim(), image.weights.rows(),
            image.has_hidden() ? image.hidden_weights.rows() : 0, text.has_hidden() ? text.hidden_weights.rows() : 0};
  }

  template <typename To>
  BasicEncoderParams<To> cast() const {
    return {image.template cast<To>(), text.template cast<To>(), static_cast<To>(log_temperature)};
  }
};

using EncoderParams = BasicEncoderParams<double>;
/// d total / d parameter, shape-congruent with EncoderParams.
using GradientSet = BasicEncoderParams<double>;

/// Calls f on every weight block (hidden weights, hidden bias, output weights
/// of the image tower, then the text tower). log_temperature is not a block.
template <typename Params, typename F>
void visit_blocks(Params& p, F&& f) {
  for (auto* t : {&p.image, &p.text}) {
    f(t->hidden_weights);
    f(t->hidden_bias);
    f(t->weights);
  }
}

template <typename Scalar>
Index parameter_count(const BasicEncoderParams<Scalar>& p) {
  Index n = 1;
  visit_blocks(p, [&](const auto& block) { n += block.size(); });
  return n;
}

/// Blocks in visit order, then log_temperature last.
template <typename Scalar>
Vector<Scalar> flatten(const BasicEncoderParams<Scalar>& p) {
  Vector<Scalar> out(parameter_count(p));
  Index at = 0;
  visit_blocks(p, [&](const auto& block) {
    out.segment(at, block.size()) = block.reshaped();
    at += block.size();
  });
  out(at) = p.log_temperature;
  return out;
}

template <typename Scalar>
void unflatten(BasicEncoderParams<Scalar>& p, const Vector<Scalar>& flat) {
  require(flat.size() == parameter_count(p), ErrorKind::ShapeMismatch, "unflatten: parameter count mismatch");
  Index at = 0;
  visit_blocks(p, [&](auto& block) {
    block.reshaped() = flat.segment(at, block.size());
    at += block.size();
  });
  p.log_temperature = flat(at);
}

template <typename Scalar>
BasicEncoderParams<Scalar> zeros_like(const BasicEncoderParams<Scalar>& p) {
  BasicEncoderParams<Scalar> out = p;
  visit_blocks(out, [](auto& block) { block.setZero(); });
  out.log_temperature = Scalar(0);
  return out;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases,
/// log_temperature = log(1/0.07), so scores start as cosine * 0.07.
EncoderParams init_params(const ModelShape& shape, Rng& rng);

template <typename Scalar>
Vector<Scalar> encode(const BasicEncoderParams<Scalar>& params, Modality modality, const Vector<Scalar>& x) {
  const auto& t = params.tower(modality);
  require(x.size() == t.input_dim(), ErrorKind::DimensionMismatch,
          "encode: input dim " + std::to_string(x.size()) + ", expected " + std::to_string(t.input_dim()));
  if (!t.has_hidden()) return t.weights * x;
  const Vector<Scalar> hidden = (t.hidden_weights * x + t.hidden_bias).array().tanh().matrix();
  return t.weights * hidden;
}

template <typename Scalar>
std::vector<Vector<Scalar>> encode_all(const BasicEncoderParams<Scalar>& params, Modality modality,
                                       std::span<const Vector<Scalar>> xs) {
  std::vector<Vector<Scalar>> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(encode(params, modality, x));
  return out;
}

template <typename Scalar>
BasicBatchSimilarities<Scalar> forward_batch(const BasicEncoderParams<Scalar>& params,
                                             std::span<const Vector<Scalar>> images,
                                             std::span<const Vector<Scalar>> texts) {
  require(images.size() == texts.size(), ErrorKind::LengthMismatch, "forward_batch: image/text counts differ");
  using std::exp;
  const auto img = encode_all(params, Modality::image, images);
  const auto txt = encode_all(params, Modality::text, texts);
  return batch_similarity(std::span<const Vector<Scalar>>(img), std::span<const Vector<Scalar>>(txt),
                          Scalar(exp(params.log_temperature)));
}

template <typename Scalar>
Scalar total_objective(const BasicEncoderParams<Scalar>& params, std::span<const Vector<Scalar>> images,
                       std::span<const Vector<Scalar>> texts, const EqSimConfig& cfg) {
  return total_loss(forward_batch(params, images, texts), cfg).total;
}

namespace detail {

template <typename Scalar>
void tower_backward(const Tower<Scalar>& t, const Vector<Scalar>& x, const Vector<Scalar>& d_out,
                    Tower<Scalar>& grad) {
  if (!t.has_hidden()) {
    grad.weights.noalias() += d_out * x.transpose();
    return;
  }
  const Vector<Scalar> hidden = (t.hidden_weights * x + t.hidden_bias).array().tanh().matrix();
  grad.weights.noalias() += d_out * hidden.transpose();
  const Vector<Scalar> d_pre =
      ((t.weights.transpose() * d_out).array() * (Scalar(1) - hidden.array().square())).matrix();
  grad.hidden_weights.noalias() += d_pre * x.transpose();
  grad.hidden_bias += d_pre;
}

}  // namespace detail

/// Total loss breakdown and its exact gradient. The close/distant partition is
/// a discrete selection and is held fixed when differentiating.
template <typename Scalar>
std::pair<BasicLossBreakdown<Scalar>, BasicEncoderParams<Scalar>> loss_and_grad(
    const BasicEncoderParams<Scalar>& params, std::span<const Vector<Scalar>> images,
    std::span<const Vector<Scalar>> texts, const EqSimConfig& cfg) {
  using std::exp;
  require(images.size() == texts.size(), ErrorKind::LengthMismatch, "loss_and_grad: image/text counts differ");
  const auto img = encode_all(params, Modality::image, images);
  const auto txt = encode_all(params, Modality::text, texts);
  const Scalar temperature = exp(params.log_temperature);
  const auto m = batch_similarity(std::span<const Vector<Scalar>>(img), std::span<const Vector<Scalar>>(txt),
                                  temperature);
  const auto breakdown = total_loss(m, cfg);

  Matrix<Scalar> d_scores = itc_loss_gradient(m);
  if (cfg.mode != EqSimMode::off && cfg.beta != 0.0) {
    const auto eq_input = equivariance_input(m, cfg);
    const auto partition = partition_for(eq_input, cfg);
    Matrix<Scalar> d_eq = eq_loss_gradient(eq_input, cfg, partition);
    if (cfg.use_softmax) d_eq = softmax_rows_backward(eq_input.scores, d_eq);
    d_scores += Scalar(cfg.beta) * d_eq;
  }

  auto grad = zeros_like(params);
  // scores = cos / T = cos * exp(-log_temperature)
  grad.log_temperature = -(d_scores.array() * m.scores.array()).sum();
  const Matrix<Scalar> d_cos = d_scores / temperature;

  const Index n = m.n();
  const Index dim = params.image.weights.rows();
  Matrix<Scalar> unit_img(n, dim), unit_txt(n, dim);
  Vector<Scalar> norm_img(n), norm_txt(n);
  for (Index i = 0; i < n; ++i) {
    norm_img(i) = img[i].norm();
    norm_txt(i) = txt[i].norm();
    unit_img.row(i) = img[i].transpose() / norm_img(i);
    unit_txt.row(i) = txt[i].transpose() / norm_txt(i);
  }
  const Matrix<Scalar> d_unit_img = d_cos * unit_txt;
  const Matrix<Scalar> d_unit_txt = d_cos.transpose() * unit_img;
  for (Index i = 0; i < n; ++i) {
    // d/de of e/|e| projects out the radial component.
    const Vector<Scalar> u = unit_img.row(i).transpose();
    const Vector<Scalar> du = d_unit_img.row(i).transpose();
    detail::tower_backward(params.image, images[i], Vector<Scalar>((du - u * u.dot(du)) / norm_img(i)), grad.image);
    const Vector<Scalar> v = unit_txt.row(i).transpose();
    const Vector<Scalar> dv = d_unit_txt.row(i).transpose();
    detail::tower_backward(params.text, texts[i], Vector<Scalar>((dv - v * v.dot(dv)) / norm_txt(i)), grad.text);
  }
  return {breakdown, grad};
}

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every k.
template <typename Scalar, typename F>
Vector<Scalar> central_difference(F&& f, const Vector<Scalar>& x, Scalar h) {
  Vector<Scalar> out(x.size());
  Vector<Scalar> probe = x;
  for (Index k = 0; k < x.size(); ++k) {
    probe(k) = x(k) + h;
    const Scalar up = f(probe);
    probe(k) = x(k) - h;
    const Scalar down = f(probe);
    probe(k) = x(k);
    out(k) = (up - down) / (Scalar(2) * h);
  }
  return out;
}

/// Finite-difference gradient of the total loss, evaluated in long double so
/// cancellation error stays far below the step's truncation error.
GradientSet finite_diff_grad(const EncoderParams& params, std::span<const EmbVector> images,
                             std::span<const EmbVector> texts, const EqSimConfig& cfg, double h = 1e-5);

enum class OptimizerKind { sgd, adam };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  EqSimConfig eqsim;
  double learning_rate = 0.01;
  long steps = 2000;
  Index batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  AdamConfig adam;

  void validate() const;
};

struct Batch {
  std::vector<EmbVector> images;
  std::vector<EmbVector> texts;
};

class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual Batch next() = 0;
};

/// Replays a fixed list of batches round-robin.
class FixedBatches final : public BatchSource {
 public:
  explicit FixedBatches(std::vector<Batch> batches) : batches_(std::move(batches)) {}
  Batch next() override;

 private:
  std::vector<Batch> batches_;
  std::size_t at_ = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<LossBreakdown> history;
};

/// Runs cfg.steps optimizer steps; history[t] is the loss before step t.
/// Throws NonFiniteLossError when a loss or gradient stops being finite.
TrainResult train(const TrainConfig& cfg, EncoderParams initial, BatchSource& data);
/// Same, with parameters initialised from the "init" sub-stream of cfg.seed.
TrainResult train(const TrainConfig& cfg, const ModelShape& shape, BatchSource& data);

}  // namespace eqsim
