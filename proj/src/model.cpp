// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/model.hpp"

#include <cmath>

namespace eqsim {

namespace {

Matrix<double> uniform_fan_in(Index rows, Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix<double> m(rows, cols);
  // Row-major fill so the draw order does not depend on storage order.
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

Tower<double> init_tower(Index input, Index hidden, Index embed, Rng& rng) {
  Tower<double> t;
  if (hidden > 0) {
    t.hidden_weights = uniform_fan_in(hidden, input, rng);
    t.hidden_bias = Vector<double>::Zero(hidden);
    t.weights = uniform_fan_in(embed, hidden, rng);
  } else {
    t.weights = uniform_fan_in(embed, input, rng);
  }
  return t;
}

bool finite_params(const EncoderParams& p) {
  bool ok = std::isfinite(p.log_temperature);
  visit_blocks(p, [&](const auto& block) { ok = ok && all_finite(block); });
  return ok;
}

}  // namespace

EncoderParams init_params(const ModelShape& shape, Rng& rng) {
  require(shape.d_img > 0 && shape.d_txt > 0 && shape.embed_dim > 0, ErrorKind::InvalidConfig,
          "model dims must be positive");
  require(shape.hidden_img >= 0 && shape.hidden_txt >= 0, ErrorKind::InvalidConfig,
          "hidden widths must be >= 0");
  EncoderParams p;
  p.image = init_tower(shape.d_img, shape.hidden_img, shape.embed_dim, rng);
  p.text = init_tower(shape.d_txt, shape.hidden_txt, shape.embed_dim, rng);
  p.log_temperature = std::log(1.0 / 0.07);
  return p;
}

GradientSet finite_diff_grad(const EncoderParams& params, std::span<const EmbVector> images,
                             std::span<const EmbVector> texts, const EqSimConfig& cfg, double h) {
  require(h >= 1e-7 && h <= 1e-3, ErrorKind::InvalidConfig, "finite_diff_grad: h must lie in [1e-7, 1e-3]");
  using Wide = long double;
  auto wide_params = params.cast<Wide>();
  std::vector<Vector<Wide>> wide_images, wide_texts;
  for (const auto& x : images) wide_images.push_back(x.cast<Wide>());
  for (const auto& x : texts) wide_texts.push_back(x.cast<Wide>());
  const auto objective = [&](const Vector<Wide>& theta) {
    unflatten(wide_params, theta);
    return total_objective(wide_params, std::span<const Vector<Wide>>(wide_images),
                           std::span<const Vector<Wide>>(wide_texts), cfg);
  };
  const Vector<Wide> theta = flatten(wide_params);
  const Vector<Wide> diff = central_difference(objective, theta, static_cast<Wide>(h));
  GradientSet out = params;
  unflatten(out, Vector<double>(diff.cast<double>()));
  return out;
}

void TrainConfig::validate() const {
  eqsim.validate();
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::InvalidConfig,
          "train.learning_rate must be >= 0");
  require(steps >= 0, ErrorKind::InvalidConfig, "train.steps must be >= 0");
  require(batch_size >= 2, ErrorKind::InvalidConfig, "train.batch_size must be >= 2");
  if (eqsim.uses_partition())
    require(eqsim.k_close < batch_size, ErrorKind::InvalidConfig, "eqsim.k_close must be < train.batch_size");
  if (optimizer == OptimizerKind::adam) {
    require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
            ErrorKind::InvalidConfig, "adam betas must lie in [0, 1)");
    require(adam.epsilon > 0.0, ErrorKind::InvalidConfig, "adam epsilon must be > 0");
  }
}

Batch FixedBatches::next() {
  require(!batches_.empty(), ErrorKind::EmptyValues, "FixedBatches: no batches");
  const Batch& b = batches_[at_];
  at_ = (at_ + 1) % batches_.size();
  return b;
}

TrainResult train(const TrainConfig& cfg, EncoderParams initial, BatchSource& data) {
  cfg.validate();
  TrainResult result{std::move(initial), {}};
  result.history.reserve(static_cast<std::size_t>(cfg.steps));

  Vector<double> theta = flatten(result.params);
  Vector<double> first_moment = Vector<double>::Zero(theta.size());
  Vector<double> second_moment = Vector<double>::Zero(theta.size());
  double beta1_power = 1.0, beta2_power = 1.0;

  for (long step = 0; step < cfg.steps; ++step) {
    const Batch batch = data.next();
    require(static_cast<Index>(batch.images.size()) == cfg.batch_size, ErrorKind::ShapeMismatch,
            "train: batch size differs from train.batch_size");
    const auto [loss, grad] = loss_and_grad(result.params, std::span<const EmbVector>(batch.images),
                                            std::span<const EmbVector>(batch.texts), cfg.eqsim);
    if (!std::isfinite(loss.total)) throw NonFiniteLossError(step, "loss is not finite");
    if (!finite_params(grad)) throw NonFiniteLossError(step, "gradient is not finite");
    result.history.push_back(loss);

    const Vector<double> g = flatten(grad);
    if (cfg.optimizer == OptimizerKind::sgd) {
      theta -= cfg.learning_rate * g;
    } else {
      const auto& a = cfg.adam;
      first_moment = a.beta1 * first_moment + (1.0 - a.beta1) * g;
      second_moment = a.beta2 * second_moment + (1.0 - a.beta2) * g.cwiseAbs2();
      beta1_power *= a.beta1;
      beta2_power *= a.beta2;
      const Vector<double> m_hat = first_moment / (1.0 - beta1_power);
      const Vector<double> v_hat = second_moment / (1.0 - beta2_power);
      theta.array() -= cfg.learning_rate * m_hat.array() / (v_hat.array().sqrt() + a.epsilon);
    }
    unflatten(result.params, theta);
    // A diverged update shows up as non-finite weights or a temperature
    // that no longer has a positive, finite exponential.
    const double temperature = std::exp(result.params.log_temperature);
    if (!all_finite(theta) || !(temperature > 0.0) || !std::isfinite(temperature))
      throw NonFiniteLossError(step, "parameters diverged after the update");
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const ModelShape& shape, BatchSource& data) {
  Rng rng = Rng::substream(cfg.seed, "init");
  return train(cfg, init_params(shape, rng), data);
}

}  // namespace eqsim
