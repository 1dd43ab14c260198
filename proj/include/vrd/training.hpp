#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vrd/corpus.hpp"
#include "vrd/error.hpp"
#include "vrd/linear.hpp"
#include "vrd/models.hpp"
#include "vrd/random.hpp"

namespace vrd {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  double l2 = 0.0;
  FusionSpace fusion_space = FusionSpace::logit_product;
  bool shuffle = true;
  // Per-class loss multipliers; empty means unweighted.
  std::vector<double> class_weights;

  void validate(std::size_t num_classes) const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning_rate must be a finite non-negative number");
    }
    if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
    if (epochs == 0) throw InvalidArgument("epochs must be positive");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw InvalidArgument("l2 must be non-negative");
    if (!class_weights.empty() && class_weights.size() != num_classes) {
      throw InvalidArgument("class_weights has " + std::to_string(class_weights.size()) +
                            " entries, expected " + std::to_string(num_classes));
    }
    for (double w : class_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("class weights must be non-negative");
    }
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // running accuracy of pre-update predictions
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double final_accuracy = 0.0;
  std::uint64_t checksum = 0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// -log softmax(logits)[label] and its gradient softmax(logits) - onehot(label).
inline LossGrad xent_loss_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
  }
  LossGrad out;
  out.grad = softmax(logits);
  // log-sum-exp form keeps the loss accurate when p[label] underflows
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  out.loss = (m + std::log(sum)) - logits[label];
  out.grad[label] -= 1.0;
  return out;
}

struct JointLossGrad {
  double loss = 0.0;
  std::vector<double> grad_language;
  std::vector<double> grad_visual;
};

// Cross-entropy of the fused softmax. With z = lang * vis (elementwise) and
// g = softmax(z) - onehot, dL/dlang = g * vis and dL/dvis = g * lang.
// For log_space_sum (z = lang + vis) both gradients are g.
inline JointLossGrad joint_loss_grad(std::span<const double> lang, std::span<const double> vis,
                                     std::size_t label,
                                     FusionSpace space = FusionSpace::logit_product) {
  const auto z = fused_logits(lang, vis, space);
  auto base = xent_loss_grad(z, label);
  JointLossGrad out;
  out.loss = base.loss;
  out.grad_language = base.grad;
  out.grad_visual = base.grad;
  if (space == FusionSpace::logit_product) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      out.grad_language[i] = base.grad[i] * vis[i];
      out.grad_visual[i] = base.grad[i] * lang[i];
    }
  }
  return out;
}

struct LabeledVector {
  std::vector<double> input;
  std::size_t label = 0;
};

struct JointExample {
  std::vector<double> language;
  std::vector<double> visual;
  std::size_t label = 0;
};

namespace detail {

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Accumulates per-example gradients of one layer and applies SGD.
class LayerGradient {
 public:
  explicit LayerGradient(const LinearLayer& layer)
      : cols_(layer.inputs()), dw_(layer.weights().size(), 0.0), db_(layer.outputs(), 0.0) {}

  void clear() {
    std::fill(dw_.begin(), dw_.end(), 0.0);
    std::fill(db_.begin(), db_.end(), 0.0);
  }

  void add(std::span<const double> grad_logits, std::span<const double> x, double weight) {
    for (std::size_t r = 0; r < db_.size(); ++r) {
      const double g = grad_logits[r] * weight;
      if (g == 0.0) continue;
      db_[r] += g;
      double* row = dw_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) row[c] += g * x[c];
    }
  }

  void apply(LinearLayer& layer, double lr, double l2, double scale) const {
    auto w = layer.weights();
    auto b = layer.bias();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (dw_[i] * scale + l2 * w[i]);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * db_[i] * scale;
  }

 private:
  std::size_t cols_;
  std::vector<double> dw_;
  std::vector<double> db_;
};

inline double l2_penalty(const LinearLayer& layer, double l2) {
  if (l2 == 0.0) return 0.0;
  double s = 0.0;
  for (double w : layer.weights()) s += w * w;
  return 0.5 * l2 * s;
}

// Shuffle seed is decorrelated from the initialization seed.
inline std::uint64_t shuffle_seed(std::uint64_t seed) { return seed * 0x9e3779b97f4a7c15ULL + 1; }

template <typename Example, typename Step>
TrainReport run_epochs(std::span<const Example> examples, const TrainConfig& config, Step&& step) {
  TrainReport report;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(shuffle_seed(config.seed));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto batch = std::span<const std::size_t>(order).subspan(start, end - start);
      const auto [loss, hits] = step(batch);
      loss_sum += loss;
      correct += hits;
    }
    const double n = static_cast<double>(examples.size());
    report.epochs.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
  }
  return report;
}

template <typename T>
std::size_t common_width(std::span<const T> items, std::vector<double> T::*field, const char* what) {
  const std::size_t w = (items.front().*field).size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if ((items[i].*field).size() != w) {
      throw InvalidArgument(std::string(what) + " input " + std::to_string(i) + " has length " +
                            std::to_string((items[i].*field).size()) + ", expected " + std::to_string(w));
    }
  }
  return w;
}

inline void check_labels(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) {
    throw InvalidArgument("label " + std::to_string(label) + " out of range for " +
                          std::to_string(num_classes) + " classes");
  }
}

}  // namespace detail

struct TrainedLayer {
  LinearLayer layer;
  TrainReport report;
};

/// Minibatch SGD on the mean softmax cross-entropy of a single linear module.
inline TrainedLayer train_module(std::span<const LabeledVector> examples, std::size_t num_classes,
                                 const TrainConfig& config,
                                 std::optional<LinearLayer> init = std::nullopt) {
  if (examples.empty()) throw InvalidArgument("training set is empty");
  if (num_classes == 0) throw InvalidArgument("number of classes must be positive");
  config.validate(num_classes);
  const std::size_t width = detail::common_width(examples, &LabeledVector::input, "training");
  for (const auto& ex : examples) detail::check_labels(ex.label, num_classes);

  LinearLayer layer = init ? std::move(*init) : LinearLayer::random(num_classes, width, config.seed);
  if (layer.outputs() != num_classes || layer.inputs() != width) {
    throw InvalidArgument("initial layer shape does not match the training data");
  }
  detail::LayerGradient grad(layer);

  auto step = [&](std::span<const std::size_t> batch) {
    grad.clear();
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t idx : batch) {
      const auto& ex = examples[idx];
      const auto logits = layer.forward(ex.input);
      const auto lg = xent_loss_grad(logits, ex.label);
      const double w = config.class_weights.empty() ? 1.0 : config.class_weights[ex.label];
      loss += w * lg.loss;
      hits += detail::argmax(logits) == ex.label ? 1 : 0;
      grad.add(lg.grad, ex.input, w);
    }
    loss += detail::l2_penalty(layer, config.l2) * static_cast<double>(batch.size());
    grad.apply(layer, config.learning_rate, config.l2, 1.0 / static_cast<double>(batch.size()));
    return std::pair<double, std::size_t>{loss, hits};
  };

  TrainedLayer out{LinearLayer{}, detail::run_epochs(examples, config, step)};
  std::size_t correct = 0;
  for (const auto& ex : examples) correct += detail::argmax(layer.forward(ex.input)) == ex.label;
  out.report.final_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  out.report.checksum = layer.checksum();
  out.layer = std::move(layer);
  return out;
}

struct TrainedPair {
  LinearLayer language;
  LinearLayer visual;
  TrainReport report;
};

/// Joint SGD of both modules through the fused loss.
inline TrainedPair train_joint(std::span<const JointExample> examples, std::size_t num_classes,
                               const TrainConfig& config,
                               std::optional<LinearLayer> init_language = std::nullopt,
                               std::optional<LinearLayer> init_visual = std::nullopt) {
  if (examples.empty()) throw InvalidArgument("training set is empty");
  if (num_classes == 0) throw InvalidArgument("number of classes must be positive");
  config.validate(num_classes);
  const std::size_t lw = detail::common_width(examples, &JointExample::language, "language");
  const std::size_t vw = detail::common_width(examples, &JointExample::visual, "visual");
  for (const auto& ex : examples) detail::check_labels(ex.label, num_classes);

  LinearLayer lang = init_language ? std::move(*init_language)
                                   : LinearLayer::random(num_classes, lw, config.seed);
  LinearLayer vis = init_visual ? std::move(*init_visual)
                                : LinearLayer::random(num_classes, vw, config.seed ^ 0x5ca1ab1e0ddba11ULL);
  if (lang.outputs() != num_classes || lang.inputs() != lw || vis.outputs() != num_classes ||
      vis.inputs() != vw) {
    throw InvalidArgument("initial layer shapes do not match the training data");
  }
  detail::LayerGradient lgrad(lang);
  detail::LayerGradient vgrad(vis);

  auto step = [&](std::span<const std::size_t> batch) {
    lgrad.clear();
    vgrad.clear();
    double loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t idx : batch) {
      const auto& ex = examples[idx];
      const auto a = lang.forward(ex.language);
      const auto v = vis.forward(ex.visual);
      const auto g = joint_loss_grad(a, v, ex.label, config.fusion_space);
      const double w = config.class_weights.empty() ? 1.0 : config.class_weights[ex.label];
      loss += w * g.loss;
      hits += detail::argmax(fused_logits(a, v, config.fusion_space)) == ex.label ? 1 : 0;
      lgrad.add(g.grad_language, ex.language, w);
      vgrad.add(g.grad_visual, ex.visual, w);
    }
    loss += (detail::l2_penalty(lang, config.l2) + detail::l2_penalty(vis, config.l2)) *
            static_cast<double>(batch.size());
    const double scale = 1.0 / static_cast<double>(batch.size());
    lgrad.apply(lang, config.learning_rate, config.l2, scale);
    vgrad.apply(vis, config.learning_rate, config.l2, scale);
    return std::pair<double, std::size_t>{loss, hits};
  };

  TrainedPair out{LinearLayer{}, LinearLayer{}, detail::run_epochs(examples, config, step)};
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto z = fused_logits(lang.forward(ex.language), vis.forward(ex.visual), config.fusion_space);
    correct += detail::argmax(z) == ex.label;
  }
  out.report.final_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  out.report.checksum = Fnv1a64().u64(lang.checksum()).u64(vis.checksum()).digest();
  out.language = std::move(lang);
  out.visual = std::move(vis);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-level training

/// One example per ground-truth triple, in corpus order.
inline std::vector<JointExample> build_examples(const Corpus& corpus, const InputBuilder& builder) {
  std::vector<JointExample> out;
  for (const auto& img : corpus) {
    for (const auto& t : img.ground_truth) {
      auto in = builder.build(img, img.subject_of(t), img.object_of(t));
      out.push_back({std::move(in.language), std::move(in.visual), t.predicate_id});
    }
  }
  return out;
}

enum class CombineMode { joint, separate };

struct ModuleReport {
  std::string module;  // "language", "visual" or "joint"
  TrainReport report;
};

struct TrainedModel {
  Model model;
  std::vector<ModuleReport> reports;
};

// Trains whichever modules the variant has. "+" variants train jointly
// through the fused loss unless `mode` is separate. `init` seeds the
// parameters (e.g. from separately trained modules); otherwise they are drawn
// from config.seed.
inline TrainedModel train_model(const ModelConfig& model_config, const ModelDims& dims,
                                std::span<const JointExample> examples, const TrainConfig& config,
                                CombineMode mode = CombineMode::joint,
                                const Model* init = nullptr) {
  Model start = init ? *init : Model::initialize(model_config, dims, config.seed);
  if (start.config().variant_name() != model_config.variant_name() || !(start.dims() == dims)) {
    throw InvalidArgument("initial model does not match variant " + model_config.variant_name());
  }
  TrainedModel out;
  auto separate = [&](bool language) {
    std::vector<LabeledVector> xs;
    xs.reserve(examples.size());
    for (const auto& ex : examples) xs.push_back({language ? ex.language : ex.visual, ex.label});
    auto& slot = language ? start.language() : start.visual();
    auto trained = train_module(xs, dims.num_predicates, config, std::move(*slot));
    slot = std::move(trained.layer);
    out.reports.push_back({language ? "language" : "visual", std::move(trained.report)});
  };

  TrainConfig cfg = config;
  cfg.fusion_space = model_config.fusion_space;
  if (model_config.fusion() == Fusion::product && mode == CombineMode::joint) {
    auto trained = train_joint(examples, dims.num_predicates, cfg, std::move(*start.language()),
                               std::move(*start.visual()));
    start.language() = std::move(trained.language);
    start.visual() = std::move(trained.visual);
    out.reports.push_back({"joint", std::move(trained.report)});
  } else {
    if (model_config.language) separate(true);
    if (model_config.visual) separate(false);
  }
  out.model = Model(model_config, dims, std::move(start.language()), std::move(start.visual()),
                    config.seed);
  return out;
}

}  // namespace vrd
