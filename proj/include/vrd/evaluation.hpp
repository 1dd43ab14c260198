#pragma once

#include <algorithm>
#include <concepts>
#include <exception>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "vrd/corpus.hpp"
#include "vrd/error.hpp"
#include "vrd/geometry.hpp"
#include "vrd/models.hpp"

namespace vrd {

enum class Task { predicate, phrase, relationship };

inline std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::predicate: return "predicate";
    case Task::phrase: return "phrase";
    case Task::relationship: return "relationship";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "predicate") return Task::predicate;
  if (s == "phrase") return Task::phrase;
  if (s == "relationship") return Task::relationship;
  throw InvalidArgument("unknown task '" + std::string(s) + "' (expected predicate|phrase|relationship)");
}

/// Where candidate pairs come from: annotated objects or detector output.
enum class PairSource { gt_pairs, detections };

inline PairSource pair_source_for(Task t) noexcept {
  return t == Task::predicate ? PairSource::gt_pairs : PairSource::detections;
}

/// Ranking key of a prediction: predicate probability alone, or multiplied
/// by both detector confidences.
enum class RankKey { pred_only, product };

inline RankKey parse_rank_key(std::string_view s) {
  if (s == "pred_only") return RankKey::pred_only;
  if (s == "product") return RankKey::product;
  throw InvalidArgument("unknown rank key '" + std::string(s) + "' (expected pred_only|product)");
}

inline std::string_view to_string(RankKey r) noexcept {
  return r == RankKey::pred_only ? "pred_only" : "product";
}

struct PredictedRelationship {
  ObjectInstance subject;
  ObjectInstance object;
  std::size_t subject_index = 0;  // into the pair source's object list
  std::size_t object_index = 0;
  std::size_t predicate_id = 0;
  double score = 0.0;
  std::size_t pair_order = 0;  // position of the pair in candidate order
};

/// Maps (image, subject, object) to predicate probabilities.
template <typename S>
concept PairScorer = requires(const S& s, const ImageRecord& img, const ObjectInstance& o) {
  { s(img, o, o) } -> std::convertible_to<PredicateScores>;
};

struct ModelScorer {
  const Model& model;
  const InputBuilder& builder;

  PredicateScores operator()(const ImageRecord& img, const ObjectInstance& s,
                             const ObjectInstance& o) const {
    return model.probabilities(builder.build(img, s, o));
  }
};

struct ScoredPair {
  std::size_t subject_index = 0;
  std::size_t object_index = 0;
  PredicateScores probabilities;
};

inline const std::vector<ObjectInstance>& source_objects(const ImageRecord& image, PairSource source) {
  if (source == PairSource::gt_pairs) return image.objects;
  if (!image.detections) {
    throw InvalidArgument("image '" + image.image_id + "' has no detections");
  }
  return *image.detections;
}

template <PairScorer Scorer>
std::vector<ScoredPair> score_pairs(const Scorer& scorer, const ImageRecord& image, PairSource source) {
  const auto& objs = source_objects(image, source);
  std::vector<ScoredPair> out;
  for (const auto& [i, j] : candidate_pairs(objs)) {
    PredicateScores p = scorer(image, objs[i], objs[j]);
    if (p.kind != ScoreKind::probabilities) throw InvalidArgument("scorer must return probabilities");
    out.push_back({i, j, std::move(p)});
  }
  return out;
}

/// k predictions per scored pair, in generation order.
inline std::vector<PredictedRelationship> predictions_from_scores(
    const std::vector<ObjectInstance>& objs, const std::vector<ScoredPair>& pairs, std::size_t k,
    RankKey rank = RankKey::product) {
  std::vector<PredictedRelationship> out;
  out.reserve(pairs.size() * k);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& sp = pairs[p];
    const auto& s = objs[sp.subject_index];
    const auto& o = objs[sp.object_index];
    const double conf = rank == RankKey::product ? s.confidence * o.confidence : 1.0;
    for (const auto& rp : predict_topk(sp.probabilities, k)) {
      out.push_back({s, o, sp.subject_index, sp.object_index, rp.predicate_id, rp.score * conf, p});
    }
  }
  return out;
}

template <PairScorer Scorer>
std::vector<PredictedRelationship> generate_predictions(const Scorer& scorer, const ImageRecord& image,
                                                        PairSource source, std::size_t k,
                                                        RankKey rank = RankKey::product) {
  const auto pairs = score_pairs(scorer, image, source);
  return predictions_from_scores(source_objects(image, source), pairs, k, rank);
}

/// Score descending, then predicate id ascending, then pair order.
inline void rank_predictions(std::vector<PredictedRelationship>& preds) {
  std::stable_sort(preds.begin(), preds.end(),
                   [](const PredictedRelationship& a, const PredictedRelationship& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.predicate_id != b.predicate_id) return a.predicate_id < b.predicate_id;
                     return a.pair_order < b.pair_order;
                   });
}

namespace detail {

// Greedy one-to-one matching over the top-n ranked predictions: each
// prediction, in rank order, claims the first still-unmatched GT triple it
// satisfies.
template <typename Match>
std::size_t greedy_match(std::vector<PredictedRelationship> preds, const ImageRecord& gt,
                         std::size_t n, Match&& match) {
  rank_predictions(preds);
  if (preds.size() > n) preds.resize(n);
  std::vector<bool> used(gt.ground_truth.size(), false);
  std::size_t matched = 0;
  for (const auto& p : preds) {
    for (std::size_t g = 0; g < gt.ground_truth.size(); ++g) {
      if (!used[g] && match(p, gt.ground_truth[g])) {
        used[g] = true;
        ++matched;
        break;
      }
    }
  }
  return matched;
}

}  // namespace detail

/// Same subject instance, object instance and predicate (predictions from GT pairs).
inline std::size_t match_predicate_prediction(const std::vector<PredictedRelationship>& preds,
                                              const ImageRecord& gt, std::size_t n) {
  return detail::greedy_match(preds, gt, n, [](const PredictedRelationship& p, const RelationshipTriple& t) {
    return p.subject_index == t.subject && p.object_index == t.object && p.predicate_id == t.predicate_id;
  });
}

namespace detail {
inline bool same_labels(const PredictedRelationship& p, const ImageRecord& gt, const RelationshipTriple& t) {
  return p.predicate_id == t.predicate_id && p.subject.category_id == gt.subject_of(t).category_id &&
         p.object.category_id == gt.object_of(t).category_id;
}
}  // namespace detail

/// Same labels and union-box IoU >= threshold.
inline std::size_t match_phrase(const std::vector<PredictedRelationship>& preds, const ImageRecord& gt,
                                std::size_t n, double iou_threshold = 0.5) {
  return detail::greedy_match(preds, gt, n, [&](const PredictedRelationship& p, const RelationshipTriple& t) {
    return detail::same_labels(p, gt, t) &&
           iou(union_box(p.subject.box, p.object.box),
               union_box(gt.subject_of(t).box, gt.object_of(t).box)) >= iou_threshold;
  });
}

/// Same labels and both subject and object IoU >= threshold.
inline std::size_t match_relationship(const std::vector<PredictedRelationship>& preds,
                                      const ImageRecord& gt, std::size_t n, double iou_threshold = 0.5) {
  return detail::greedy_match(preds, gt, n, [&](const PredictedRelationship& p, const RelationshipTriple& t) {
    return detail::same_labels(p, gt, t) && iou(p.subject.box, gt.subject_of(t).box) >= iou_threshold &&
           iou(p.object.box, gt.object_of(t).box) >= iou_threshold;
  });
}

inline std::size_t match_task(Task task, const std::vector<PredictedRelationship>& preds,
                              const ImageRecord& gt, std::size_t n, double iou_threshold = 0.5) {
  switch (task) {
    case Task::predicate: return match_predicate_prediction(preds, gt, n);
    case Task::phrase: return match_phrase(preds, gt, n, iou_threshold);
    case Task::relationship: return match_relationship(preds, gt, n, iou_threshold);
  }
  return 0;
}

struct RecallReport {
  Task task = Task::predicate;
  std::size_t n = 0;
  std::size_t k = 0;
  double recall = 0.0;
  std::size_t matched = 0;
  std::size_t total_gt = 0;
  bool zero_shot = false;
  bool empty = false;  // no GT after filtering; recall reported as 0
};

struct EvalParams {
  Task task = Task::predicate;
  std::vector<std::size_t> n_values{50, 100};
  std::vector<std::size_t> k_values{1};
  RankKey rank = RankKey::product;
  double iou_threshold = 0.5;
  // When set, GT is restricted to triples whose key is absent from this set.
  const std::set<TripleKey>* zero_shot_train_keys = nullptr;
  std::size_t threads = 1;
};

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// GT restricted to triples unseen in training (the image itself when keys is null).
inline ImageRecord restrict_to_unseen(const ImageRecord& image, const std::set<TripleKey>* keys) {
  ImageRecord out = image;
  if (keys == nullptr) return out;
  out.ground_truth.clear();
  for (const auto& t : image.ground_truth) {
    if (!keys->contains(triple_key(image, t))) out.ground_truth.push_back(t);
  }
  return out;
}

// Recall for every (k, n) in the grid, reported k-major. Pair scores are
// computed once per image and truncation to the top n is per image.
template <PairScorer Scorer>
std::vector<RecallReport> evaluate_recall(const Corpus& corpus, const Scorer& scorer,
                                          const EvalParams& params) {
  for (auto n : params.n_values) {
    if (n == 0) throw InvalidArgument("n must be positive");
  }
  for (auto k : params.k_values) {
    if (k == 0) throw InvalidArgument("k must be positive");
  }
  const std::size_t cells = params.n_values.size() * params.k_values.size();
  std::vector<std::vector<std::size_t>> per_image(corpus.size(), std::vector<std::size_t>(cells, 0));
  std::vector<std::size_t> gt_counts(corpus.size(), 0);
  const PairSource source = pair_source_for(params.task);

  parallel_for(corpus.size(), params.threads, [&](std::size_t i) {
    const ImageRecord gt = restrict_to_unseen(corpus[i], params.zero_shot_train_keys);
    gt_counts[i] = gt.ground_truth.size();
    if (gt.ground_truth.empty()) return;
    const auto& objs = source_objects(gt, source);
    const auto pairs = score_pairs(scorer, gt, source);
    std::size_t c = 0;
    for (auto k : params.k_values) {
      const auto preds = predictions_from_scores(objs, pairs, k, params.rank);
      for (auto n : params.n_values) {
        per_image[i][c++] = match_task(params.task, preds, gt, n, params.iou_threshold);
      }
    }
  });

  std::size_t total = 0;
  for (auto g : gt_counts) total += g;
  std::vector<RecallReport> reports;
  std::size_t c = 0;
  for (auto k : params.k_values) {
    for (auto n : params.n_values) {
      RecallReport r;
      r.task = params.task;
      r.n = n;
      r.k = k;
      r.total_gt = total;
      r.zero_shot = params.zero_shot_train_keys != nullptr;
      for (const auto& row : per_image) r.matched += row[c];
      r.empty = total == 0;
      r.recall = total == 0 ? 0.0 : static_cast<double>(r.matched) / static_cast<double>(total);
      reports.push_back(r);
      ++c;
    }
  }
  return reports;
}

template <PairScorer Scorer>
RecallReport recall_at_n(const Corpus& corpus, const Scorer& scorer, Task task, std::size_t n,
                         std::size_t k, const std::set<TripleKey>* zero_shot_train_keys = nullptr,
                         RankKey rank = RankKey::product, double iou_threshold = 0.5) {
  EvalParams p;
  p.task = task;
  p.n_values = {n};
  p.k_values = {k};
  p.rank = rank;
  p.iou_threshold = iou_threshold;
  p.zero_shot_train_keys = zero_shot_train_keys;
  return evaluate_recall(corpus, scorer, p).front();
}

}  // namespace vrd
