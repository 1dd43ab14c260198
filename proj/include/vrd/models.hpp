#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrd/corpus.hpp"
#include "vrd/embeddings.hpp"
#include "vrd/error.hpp"
#include "vrd/features.hpp"
#include "vrd/geometry.hpp"
#include "vrd/linear.hpp"
#include "vrd/random.hpp"

namespace vrd {

enum class ScoreKind { logits, probabilities };

struct PredicateScores {
  std::vector<double> values;
  ScoreKind kind = ScoreKind::logits;

  std::size_t size() const noexcept { return values.size(); }
};

// How the two module outputs combine in a "+" model.
//   logit_product: softmax(lang * vis), elementwise on logits
//   log_space_sum: softmax(lang + vis), i.e. a product of the module softmaxes
enum class FusionSpace { logit_product, log_space_sum };

inline std::string_view to_string(FusionSpace f) noexcept {
  return f == FusionSpace::logit_product ? "logit_product" : "log_space_sum";
}

inline FusionSpace parse_fusion_space(std::string_view s) {
  if (s == "logit_product") return FusionSpace::logit_product;
  if (s == "log_space_sum") return FusionSpace::log_space_sum;
  throw InvalidArgument("unknown fusion space '" + std::string(s) +
                        "' (expected logit_product|log_space_sum)");
}

/// Numerically stable (max-subtracted) softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& x : out) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : out) x /= sum;
  return out;
}

inline PredicateScores softmax(const PredicateScores& scores) {
  if (scores.kind != ScoreKind::logits) throw InvalidArgument("softmax expects logits");
  return {softmax(scores.values), ScoreKind::probabilities};
}

/// Combined logits that the fused softmax is taken over.
inline std::vector<double> fused_logits(std::span<const double> lang, std::span<const double> vis,
                                        FusionSpace space = FusionSpace::logit_product) {
  if (lang.size() != vis.size()) {
    throw InvalidArgument("fuse: length mismatch (" + std::to_string(lang.size()) + " vs " +
                          std::to_string(vis.size()) + ")");
  }
  std::vector<double> z(lang.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = space == FusionSpace::logit_product ? lang[i] * vis[i] : lang[i] + vis[i];
  }
  return z;
}

inline PredicateScores fuse(const PredicateScores& lang, const PredicateScores& vis,
                            FusionSpace space = FusionSpace::logit_product) {
  if (lang.kind != ScoreKind::logits || vis.kind != ScoreKind::logits) {
    throw InvalidArgument("fuse expects logits from both modules");
  }
  return {softmax(fused_logits(lang.values, vis.values, space)), ScoreKind::probabilities};
}

struct RankedPredicate {
  std::size_t predicate_id = 0;
  double score = 0.0;
};

/// k best predicates, descending; ties by ascending id.
inline std::vector<RankedPredicate> predict_topk(const PredicateScores& probs, std::size_t k) {
  if (k < 1 || k > probs.size()) {
    throw InvalidArgument("k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(probs.size()) + "]");
  }
  std::vector<RankedPredicate> all(probs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = {i, probs.values[i]};
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    [](const RankedPredicate& a, const RankedPredicate& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.predicate_id < b.predicate_id;
                    });
  all.resize(k);
  return all;
}

// ---------------------------------------------------------------------------
// Model variants

struct LanguageSpec {
  bool spatial = false;
  friend bool operator==(const LanguageSpec&, const LanguageSpec&) = default;
};

struct VisualSpec {
  bool word_pair = false;
  bool spatial = false;
  friend bool operator==(const VisualSpec&, const VisualSpec&) = default;
};

enum class Fusion { language_only, visual_only, product };

struct ModelDims {
  std::size_t num_predicates = 0;
  std::size_t word_dim = 0;     // D; a word pair is 2D
  std::size_t feature_dim = 0;  // F; 0 when no visual module

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// One of L, LS, V, VW, SV, SVW, or "<L|LS>+<V|VW|SV|SVW>".
struct ModelConfig {
  std::optional<LanguageSpec> language;
  std::optional<VisualSpec> visual;
  FusionSpace fusion_space = FusionSpace::logit_product;
  SpatialEncoding spatial_encoding = SpatialEncoding::proposed;

  static ModelConfig from_variant(std::string_view name) {
    std::string compact;
    for (char c : name) {
      if (c != ' ') compact.push_back(c);
    }
    auto parse_lang = [](std::string_view s) -> std::optional<LanguageSpec> {
      if (s == "L") return LanguageSpec{false};
      if (s == "LS") return LanguageSpec{true};
      return std::nullopt;
    };
    auto parse_vis = [](std::string_view s) -> std::optional<VisualSpec> {
      if (s == "V") return VisualSpec{false, false};
      if (s == "VW") return VisualSpec{true, false};
      if (s == "SV") return VisualSpec{false, true};
      if (s == "SVW") return VisualSpec{true, true};
      return std::nullopt;
    };
    ModelConfig cfg;
    const auto plus = compact.find('+');
    if (plus == std::string::npos) {
      cfg.language = parse_lang(compact);
      if (!cfg.language) cfg.visual = parse_vis(compact);
    } else {
      cfg.language = parse_lang(std::string_view(compact).substr(0, plus));
      cfg.visual = parse_vis(std::string_view(compact).substr(plus + 1));
      if (!cfg.language || !cfg.visual) cfg = {};
    }
    if (!cfg.language && !cfg.visual) {
      throw InvalidArgument("unknown model variant '" + std::string(name) + "'");
    }
    return cfg;
  }

  static const std::vector<std::string>& all_variants() {
    static const std::vector<std::string> names = {
        "L",     "LS",     "V",     "VW",     "SV",    "SVW",    "L+V",
        "L+VW",  "L+SV",   "L+SVW", "LS+V",   "LS+VW", "LS+SV",  "LS+SVW"};
    return names;
  }

  std::string variant_name() const {
    std::string lang;
    std::string vis;
    if (language) lang = language->spatial ? "LS" : "L";
    if (visual) vis = std::string(visual->spatial ? "S" : "") + "V" + (visual->word_pair ? "W" : "");
    if (!lang.empty() && !vis.empty()) return lang + "+" + vis;
    return lang.empty() ? vis : lang;
  }

  Fusion fusion() const noexcept {
    if (language && visual) return Fusion::product;
    return language ? Fusion::language_only : Fusion::visual_only;
  }

  bool needs_features() const noexcept { return visual.has_value(); }
  bool needs_embeddings() const noexcept {
    return language.has_value() || (visual && visual->word_pair);
  }
  bool needs_spatial() const noexcept {
    return (language && language->spatial) || (visual && visual->spatial);
  }

  std::size_t language_input_width(const ModelDims& d) const noexcept {
    if (!language) return 0;
    return 2 * d.word_dim + (language->spatial ? spatial_width(spatial_encoding) : 0);
  }

  /// [feature, word_pair?, spatial?]
  std::size_t visual_input_width(const ModelDims& d) const noexcept {
    if (!visual) return 0;
    return d.feature_dim + (visual->word_pair ? 2 * d.word_dim : 0) +
           (visual->spatial ? spatial_width(spatial_encoding) : 0);
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// W [word_pair, spatial?] + b
inline PredicateScores language_forward(const LinearLayer& layer, std::span<const double> word_pair,
                                        std::span<const double> spatial = {}) {
  std::vector<double> x(word_pair.begin(), word_pair.end());
  x.insert(x.end(), spatial.begin(), spatial.end());
  if (x.size() != layer.inputs()) {
    throw InvalidArgument("language module expects input length " + std::to_string(layer.inputs()) +
                          ", got " + std::to_string(x.size()));
  }
  return {layer.forward(x), ScoreKind::logits};
}

/// W [feature, word_pair?, spatial?] + b
inline PredicateScores visual_forward(const LinearLayer& layer, std::span<const double> feature,
                                      std::span<const double> word_pair = {},
                                      std::span<const double> spatial = {}) {
  std::vector<double> x(feature.begin(), feature.end());
  x.insert(x.end(), word_pair.begin(), word_pair.end());
  x.insert(x.end(), spatial.begin(), spatial.end());
  if (x.size() != layer.inputs()) {
    throw InvalidArgument("visual module expects input length " + std::to_string(layer.inputs()) +
                          ", got " + std::to_string(x.size()));
  }
  return {layer.forward(x), ScoreKind::logits};
}

/// Concatenated module inputs for one subject/object pair.
struct PairInputs {
  std::vector<double> language;
  std::vector<double> visual;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, ModelDims dims, std::optional<LinearLayer> language,
        std::optional<LinearLayer> visual, std::uint64_t seed = 0)
      : config_(config), dims_(dims), language_(std::move(language)), visual_(std::move(visual)),
        seed_(seed) {
    validate();
  }

  /// Fresh parameters; the visual layer draws from a derived seed.
  static Model initialize(const ModelConfig& config, const ModelDims& dims, std::uint64_t seed) {
    std::optional<LinearLayer> lang;
    std::optional<LinearLayer> vis;
    if (config.language) {
      lang = LinearLayer::random(dims.num_predicates, config.language_input_width(dims), seed);
    }
    if (config.visual) {
      vis = LinearLayer::random(dims.num_predicates, config.visual_input_width(dims),
                                seed ^ 0x5ca1ab1e0ddba11ULL);
    }
    return Model(config, dims, std::move(lang), std::move(vis), seed);
  }

  const ModelConfig& config() const noexcept { return config_; }
  const ModelDims& dims() const noexcept { return dims_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::optional<LinearLayer>& language() const noexcept { return language_; }
  const std::optional<LinearLayer>& visual() const noexcept { return visual_; }
  std::optional<LinearLayer>& language() noexcept { return language_; }
  std::optional<LinearLayer>& visual() noexcept { return visual_; }

  PredicateScores language_logits(const PairInputs& in) const {
    return {language_->forward(in.language), ScoreKind::logits};
  }
  PredicateScores visual_logits(const PairInputs& in) const {
    return {visual_->forward(in.visual), ScoreKind::logits};
  }

  PredicateScores probabilities(const PairInputs& in) const {
    switch (config_.fusion()) {
      case Fusion::language_only:
        return softmax(language_logits(in));
      case Fusion::visual_only:
        return softmax(visual_logits(in));
      case Fusion::product:
        return fuse(language_logits(in), visual_logits(in), config_.fusion_space);
    }
    return {};
  }

  std::uint64_t checksum() const noexcept {
    Fnv1a64 h;
    h.u64(language_ ? language_->checksum() : 0).u64(visual_ ? visual_->checksum() : 0);
    return h.digest();
  }

  void validate() const {
    if (config_.language.has_value() != language_.has_value() ||
        config_.visual.has_value() != visual_.has_value()) {
      throw InvalidArgument("model layers do not match variant " + config_.variant_name());
    }
    auto check = [&](const std::optional<LinearLayer>& l, std::size_t width, const char* what) {
      if (!l) return;
      if (l->outputs() != dims_.num_predicates || l->inputs() != width) {
        throw InvalidArgument(std::string(what) + " layer is " + std::to_string(l->outputs()) + "x" +
                              std::to_string(l->inputs()) + ", expected " +
                              std::to_string(dims_.num_predicates) + "x" + std::to_string(width));
      }
    };
    check(language_, config_.language_input_width(dims_), "language");
    check(visual_, config_.visual_input_width(dims_), "visual");
  }

 private:
  ModelConfig config_;
  ModelDims dims_;
  std::optional<LinearLayer> language_;
  std::optional<LinearLayer> visual_;
  std::uint64_t seed_ = 0;
};

// Assembles module inputs for a pair from the embedding store, the feature
// provider and the spatial encoder. Word vectors are resolved once per
// vocabulary category up front, so build() is safe to call concurrently.
class InputBuilder {
 public:
  InputBuilder(const ModelConfig& config, const Vocabulary& vocab, const EmbeddingStore* store,
               const FeatureProvider* features)
      : config_(config), features_(features) {
    if (config.needs_embeddings()) {
      if (store == nullptr) {
        throw InvalidArgument("variant " + config.variant_name() + " requires word embeddings");
      }
      word_dim_ = store->dimension();
      words_.resize(vocab.num_objects());
      errors_.resize(vocab.num_objects());
      for (std::size_t i = 0; i < vocab.num_objects(); ++i) {
        try {
          words_[i] = lookup(*store, vocab.object_name(i));
        } catch (const NotFound& e) {
          errors_[i] = e.what();
        }
      }
    }
    if (config.needs_features() && features == nullptr) {
      throw InvalidArgument("variant " + config.variant_name() + " requires visual features");
    }
  }

  std::size_t word_dim() const noexcept { return word_dim_; }
  std::size_t feature_dim() const noexcept { return features_ ? features_->dimension() : 0; }

  std::vector<double> word_pair(std::size_t subject_category, std::size_t object_category) const {
    std::vector<double> out = word(subject_category);
    const auto& o = word(object_category);
    out.insert(out.end(), o.begin(), o.end());
    return out;
  }

  PairInputs build(const ImageRecord& image, const ObjectInstance& subj,
                   const ObjectInstance& obj) const {
    PairInputs in;
    std::vector<double> words;
    std::vector<double> spatial;
    if (config_.needs_embeddings()) words = word_pair(subj.category_id, obj.category_id);
    if (config_.needs_spatial()) {
      spatial = encode_spatial(config_.spatial_encoding, subj.box, obj.box, image.dims);
    }
    if (config_.language) {
      in.language = words;
      if (config_.language->spatial) in.language.insert(in.language.end(), spatial.begin(), spatial.end());
    }
    if (config_.visual) {
      in.visual = features_->resolve(image.image_id, union_box(subj.box, obj.box));
      if (config_.visual->word_pair) in.visual.insert(in.visual.end(), words.begin(), words.end());
      if (config_.visual->spatial) in.visual.insert(in.visual.end(), spatial.begin(), spatial.end());
    }
    return in;
  }

 private:
  const WordVector& word(std::size_t category) const {
    if (category >= words_.size()) throw InvalidArgument("category id out of range");
    if (!errors_[category].empty()) throw NotFound(errors_[category]);
    return words_[category];
  }

  ModelConfig config_;
  const FeatureProvider* features_;
  std::size_t word_dim_ = 0;
  std::vector<WordVector> words_;
  std::vector<std::string> errors_;
};

}  // namespace vrd
