#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vrd/error.hpp"
#include "vrd/geometry.hpp"

namespace vrd {

// Ordered name lists; an index into a list is the class id.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> object_categories, std::vector<std::string> predicates)
      : objects_(std::move(object_categories)), predicates_(std::move(predicates)) {
    index(objects_, object_index_, "object category");
    index(predicates_, predicate_index_, "predicate");
  }

  const std::vector<std::string>& object_categories() const noexcept { return objects_; }
  const std::vector<std::string>& predicates() const noexcept { return predicates_; }
  std::size_t num_objects() const noexcept { return objects_.size(); }
  std::size_t num_predicates() const noexcept { return predicates_.size(); }

  std::optional<std::size_t> find_object(std::string_view name) const {
    auto it = object_index_.find(std::string(name));
    if (it == object_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_predicate(std::string_view name) const {
    auto it = predicate_index_.find(std::string(name));
    if (it == predicate_index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& object_name(std::size_t id) const { return objects_.at(id); }
  const std::string& predicate_name(std::size_t id) const { return predicates_.at(id); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.objects_ == b.objects_ && a.predicates_ == b.predicates_;
  }

 private:
  static void index(const std::vector<std::string>& names,
                    std::unordered_map<std::string, std::size_t>& out, const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) throw InvalidArgument(std::string("empty ") + what + " name");
      if (!out.emplace(names[i], i).second) {
        throw InvalidArgument(std::string("duplicate ") + what + " '" + names[i] + "'");
      }
    }
  }

  std::vector<std::string> objects_;
  std::vector<std::string> predicates_;
  std::unordered_map<std::string, std::size_t> object_index_;
  std::unordered_map<std::string, std::size_t> predicate_index_;
};

namespace detail {
inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}
}  // namespace detail

// Vocabulary file: an "[objects]" section and a "[predicates]" section, one
// name per line. Blank lines and lines starting with '#' are skipped.
inline Vocabulary read_vocabulary(std::istream& in) {
  std::vector<std::string> objects;
  std::vector<std::string> predicates;
  std::vector<std::string>* current = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string name = detail::trim(line);
    if (name.empty() || name.front() == '#') continue;
    if (name == "[objects]") {
      current = &objects;
    } else if (name == "[predicates]") {
      current = &predicates;
    } else if (current == nullptr) {
      throw ParseError(line_no, "name outside of an [objects] or [predicates] section");
    } else {
      current->push_back(name);
    }
  }
  try {
    return Vocabulary(std::move(objects), std::move(predicates));
  } catch (const InvalidArgument& e) {
    throw ParseError(0, std::string("vocabulary: ") + e.what());
  }
}

inline void write_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  out << "[objects]\n";
  for (const auto& n : vocab.object_categories()) out << n << '\n';
  out << "[predicates]\n";
  for (const auto& n : vocab.predicates()) out << n << '\n';
}

struct ObjectInstance {
  std::size_t category_id = 0;
  BoundingBox box;
  double confidence = 1.0;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

// Subject and object refer to ImageRecord::objects by index.
struct RelationshipTriple {
  std::size_t subject = 0;
  std::size_t predicate_id = 0;
  std::size_t object = 0;

  friend bool operator==(const RelationshipTriple&, const RelationshipTriple&) = default;
};

struct ImageRecord {
  std::string image_id;
  ImageDims dims{1.0, 1.0};
  std::vector<ObjectInstance> objects;
  std::vector<RelationshipTriple> ground_truth;
  std::optional<std::vector<ObjectInstance>> detections;

  const ObjectInstance& subject_of(const RelationshipTriple& t) const { return objects.at(t.subject); }
  const ObjectInstance& object_of(const RelationshipTriple& t) const { return objects.at(t.object); }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

using Corpus = std::vector<ImageRecord>;

struct TripleKey {
  std::size_t subject_category = 0;
  std::size_t predicate_id = 0;
  std::size_t object_category = 0;

  friend auto operator<=>(const TripleKey&, const TripleKey&) = default;
};

inline TripleKey triple_key(const ImageRecord& image, const RelationshipTriple& t) {
  return {image.subject_of(t).category_id, t.predicate_id, image.object_of(t).category_id};
}

// ---------------------------------------------------------------------------
// Canonical JSONL (one image per line)

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] inline void field_error(std::size_t line, const std::string& field,
                                     const std::string& what) {
  throw ParseError(line, "field '" + field + "': " + what);
}

inline const json& require(const json& obj, const char* key, std::size_t line,
                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) field_error(line, path + key, "missing");
  return *it;
}

inline double require_number(const json& v, std::size_t line, const std::string& field) {
  if (!v.is_number()) field_error(line, field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) field_error(line, field, "not finite");
  return d;
}

inline std::size_t require_index(const json& v, std::size_t line, const std::string& field) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    field_error(line, field, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline BoundingBox parse_box(const json& v, std::size_t line, const std::string& field) {
  if (!v.is_array() || v.size() != 4) field_error(line, field, "expected [x_min,y_min,x_max,y_max]");
  std::array<double, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) c[i] = require_number(v[i], line, field);
  try {
    return {c[0], c[1], c[2], c[3]};
  } catch (const InvalidArgument& e) {
    field_error(line, field, e.what());
  }
}

inline std::vector<ObjectInstance> parse_objects(const json& arr, const Vocabulary& vocab,
                                                 std::size_t line, const std::string& name) {
  if (!arr.is_array()) field_error(line, name, "expected an array");
  std::vector<ObjectInstance> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = name + "[" + std::to_string(i) + "].";
    const json& o = arr[i];
    if (!o.is_object()) field_error(line, name + "[" + std::to_string(i) + "]", "expected an object");
    const json& cat = require(o, "category", line, path);
    if (!cat.is_string()) field_error(line, path + "category", "expected a string");
    const auto id = vocab.find_object(cat.get<std::string>());
    if (!id) field_error(line, path + "category", "unknown category '" + cat.get<std::string>() + "'");
    ObjectInstance inst;
    inst.category_id = *id;
    inst.box = parse_box(require(o, "box", line, path), line, path + "box");
    if (auto c = o.find("confidence"); c != o.end()) {
      inst.confidence = require_number(*c, line, path + "confidence");
      if (inst.confidence < 0.0 || inst.confidence > 1.0) {
        field_error(line, path + "confidence", "must lie in [0,1]");
      }
    }
    out.push_back(inst);
  }
  return out;
}

inline ordered_json box_json(const BoundingBox& b) {
  return ordered_json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

inline ordered_json dim_json(double d) {
  if (d == std::floor(d) && d < 9.0e15) return static_cast<long long>(d);
  return d;
}

inline ordered_json objects_json(const std::vector<ObjectInstance>& objs, const Vocabulary& vocab) {
  ordered_json arr = ordered_json::array();
  for (const auto& o : objs) {
    ordered_json j;
    j["category"] = vocab.object_name(o.category_id);
    j["box"] = box_json(o.box);
    j["confidence"] = o.confidence;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace detail

/// Parses one canonical JSONL line. `line_no` is used only for diagnostics.
inline ImageRecord parse_record(std::string_view text, const Vocabulary& vocab,
                                std::size_t line_no = 0) {
  using detail::field_error;
  using detail::require;
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

  ImageRecord rec;
  const auto& id = require(j, "image_id", line_no, "");
  if (!id.is_string()) field_error(line_no, "image_id", "expected a string");
  rec.image_id = id.get<std::string>();
  const double w = detail::require_number(require(j, "width", line_no, ""), line_no, "width");
  const double h = detail::require_number(require(j, "height", line_no, ""), line_no, "height");
  if (w <= 0.0 || h <= 0.0) field_error(line_no, w <= 0.0 ? "width" : "height", "must be positive");
  rec.dims = ImageDims(w, h);

  if (auto it = j.find("objects"); it != j.end()) {
    rec.objects = detail::parse_objects(*it, vocab, line_no, "objects");
  }
  if (auto it = j.find("triples"); it != j.end()) {
    if (!it->is_array()) field_error(line_no, "triples", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "triples[" + std::to_string(i) + "].";
      const auto& t = (*it)[i];
      if (!t.is_object()) field_error(line_no, "triples[" + std::to_string(i) + "]", "expected an object");
      RelationshipTriple rt;
      rt.subject = detail::require_index(require(t, "subj", line_no, path), line_no, path + "subj");
      rt.object = detail::require_index(require(t, "obj", line_no, path), line_no, path + "obj");
      const auto& p = require(t, "pred", line_no, path);
      if (!p.is_string()) field_error(line_no, path + "pred", "expected a string");
      const auto pid = vocab.find_predicate(p.get<std::string>());
      if (!pid) field_error(line_no, path + "pred", "unknown predicate '" + p.get<std::string>() + "'");
      rt.predicate_id = *pid;
      if (rt.subject >= rec.objects.size()) field_error(line_no, path + "subj", "object index out of range");
      if (rt.object >= rec.objects.size()) field_error(line_no, path + "obj", "object index out of range");
      if (rt.subject == rt.object) field_error(line_no, path + "obj", "subject and object are the same instance");
      rec.ground_truth.push_back(rt);
    }
  }
  if (auto it = j.find("detections"); it != j.end() && !it->is_null()) {
    rec.detections = detail::parse_objects(*it, vocab, line_no, "detections");
  }
  return rec;
}

/// Reads a canonical JSONL corpus. Blank lines are skipped; image ids must be unique.
inline Corpus parse_corpus(std::istream& in, const Vocabulary& vocab) {
  Corpus out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_record(line, vocab, line_no));
    if (!seen.insert(out.back().image_id).second) {
      throw ParseError(line_no, "field 'image_id': duplicate id '" + out.back().image_id + "'");
    }
  }
  return out;
}

inline std::string serialize_record(const ImageRecord& rec, const Vocabulary& vocab) {
  detail::ordered_json j;
  j["image_id"] = rec.image_id;
  j["width"] = detail::dim_json(rec.dims.width());
  j["height"] = detail::dim_json(rec.dims.height());
  j["objects"] = detail::objects_json(rec.objects, vocab);
  detail::ordered_json triples = detail::ordered_json::array();
  for (const auto& t : rec.ground_truth) {
    detail::ordered_json tj;
    tj["subj"] = t.subject;
    tj["pred"] = vocab.predicate_name(t.predicate_id);
    tj["obj"] = t.object;
    triples.push_back(std::move(tj));
  }
  j["triples"] = std::move(triples);
  if (rec.detections) j["detections"] = detail::objects_json(*rec.detections, vocab);
  return j.dump();
}

inline void write_corpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab) {
  for (const auto& rec : corpus) out << serialize_record(rec, vocab) << '\n';
}

// ---------------------------------------------------------------------------
// VRD-style adapter. One image per line:
//   {"image_id", "width", "height",
//    "relationships": [{"subject": {"category", "bbox"}, "predicate",
//                       "object": {"category", "bbox"}}]}
// bbox is [y_min, y_max, x_min, x_max]. category and predicate may be names or
// integer vocabulary indices. Objects sharing category and box within an
// image collapse into one instance.

namespace detail {

inline std::size_t resolve_name(const json& v, std::size_t count,
                                const std::function<std::optional<std::size_t>(const std::string&)>& find,
                                std::size_t line, const std::string& field, const char* kind) {
  if (v.is_string()) {
    const auto id = find(v.get<std::string>());
    if (!id) field_error(line, field, std::string("unknown ") + kind + " '" + v.get<std::string>() + "'");
    return *id;
  }
  if (v.is_number_integer()) {
    const auto i = v.get<long long>();
    if (i < 0 || static_cast<std::size_t>(i) >= count) {
      field_error(line, field, std::string(kind) + " index out of range");
    }
    return static_cast<std::size_t>(i);
  }
  field_error(line, field, "expected a name or an index");
}

}  // namespace detail

inline ImageRecord parse_vrd_record(std::string_view text, const Vocabulary& vocab,
                                    std::size_t line_no = 0) {
  using detail::field_error;
  using detail::require;
  detail::json j;
  try {
    j = detail::json::parse(text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

  ImageRecord rec;
  const auto& id = require(j, "image_id", line_no, "");
  if (!id.is_string()) field_error(line_no, "image_id", "expected a string");
  rec.image_id = id.get<std::string>();
  const double w = detail::require_number(require(j, "width", line_no, ""), line_no, "width");
  const double h = detail::require_number(require(j, "height", line_no, ""), line_no, "height");
  if (w <= 0.0 || h <= 0.0) field_error(line_no, w <= 0.0 ? "width" : "height", "must be positive");
  rec.dims = ImageDims(w, h);

  auto find_obj = [&](const std::string& n) { return vocab.find_object(n); };
  auto find_pred = [&](const std::string& n) { return vocab.find_predicate(n); };

  auto instance = [&](const detail::json& o, const std::string& path) -> std::size_t {
    if (!o.is_object()) field_error(line_no, path, "expected an object");
    ObjectInstance inst;
    inst.category_id = detail::resolve_name(require(o, "category", line_no, path + "."),
                                            vocab.num_objects(), find_obj, line_no,
                                            path + ".category", "category");
    const auto& bb = require(o, "bbox", line_no, path + ".");
    if (!bb.is_array() || bb.size() != 4) {
      field_error(line_no, path + ".bbox", "expected [y_min,y_max,x_min,x_max]");
    }
    std::array<double, 4> c{};
    for (std::size_t i = 0; i < 4; ++i) c[i] = detail::require_number(bb[i], line_no, path + ".bbox");
    try {
      inst.box = BoundingBox(c[2], c[0], c[3], c[1]);
    } catch (const InvalidArgument& e) {
      field_error(line_no, path + ".bbox", e.what());
    }
    for (std::size_t i = 0; i < rec.objects.size(); ++i) {
      if (rec.objects[i] == inst) return i;
    }
    rec.objects.push_back(inst);
    return rec.objects.size() - 1;
  };

  if (auto it = j.find("relationships"); it != j.end()) {
    if (!it->is_array()) field_error(line_no, "relationships", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string path = "relationships[" + std::to_string(i) + "]";
      const auto& r = (*it)[i];
      if (!r.is_object()) field_error(line_no, path, "expected an object");
      RelationshipTriple t;
      t.subject = instance(require(r, "subject", line_no, path + "."), path + ".subject");
      t.object = instance(require(r, "object", line_no, path + "."), path + ".object");
      t.predicate_id = detail::resolve_name(require(r, "predicate", line_no, path + "."),
                                            vocab.num_predicates(), find_pred, line_no,
                                            path + ".predicate", "predicate");
      if (t.subject == t.object) {
        field_error(line_no, path, "subject and object are the same instance");
      }
      rec.ground_truth.push_back(t);
    }
  }
  return rec;
}

inline Corpus parse_vrd_corpus(std::istream& in, const Vocabulary& vocab) {
  Corpus out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_vrd_record(line, vocab, line_no));
    if (!seen.insert(out.back().image_id).second) {
      throw ParseError(line_no, "field 'image_id': duplicate id '" + out.back().image_id + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

/// All ordered pairs (i, j), i != j, i ascending then j ascending.
inline std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(std::size_t num_objects) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (num_objects < 2) return out;
  out.reserve(num_objects * (num_objects - 1));
  for (std::size_t i = 0; i < num_objects; ++i) {
    for (std::size_t j = 0; j < num_objects; ++j) {
      if (i != j) out.emplace_back(i, j);
    }
  }
  return out;
}

inline std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(
    const std::vector<ObjectInstance>& objects) {
  return candidate_pairs(objects.size());
}

inline std::set<TripleKey> triple_keys(const Corpus& corpus) {
  std::set<TripleKey> keys;
  for (const auto& img : corpus) {
    for (const auto& t : img.ground_truth) keys.insert(triple_key(img, t));
  }
  return keys;
}

/// Keeps only test triples whose key never occurs in `train`; drops emptied images.
inline Corpus zero_shot_filter(const Corpus& train, const Corpus& test) {
  const auto seen = triple_keys(train);
  Corpus out;
  for (const auto& img : test) {
    ImageRecord kept = img;
    kept.ground_truth.clear();
    for (const auto& t : img.ground_truth) {
      if (!seen.contains(triple_key(img, t))) kept.ground_truth.push_back(t);
    }
    if (!kept.ground_truth.empty()) out.push_back(std::move(kept));
  }
  return out;
}

struct TripleStats {
  std::map<TripleKey, std::size_t> triples;
  std::map<std::size_t, std::size_t> predicates;
  std::size_t total = 0;
};

inline TripleStats triple_key_stats(const Corpus& corpus) {
  TripleStats s;
  for (const auto& img : corpus) {
    for (const auto& t : img.ground_truth) {
      ++s.triples[triple_key(img, t)];
      ++s.predicates[t.predicate_id];
      ++s.total;
    }
  }
  return s;
}

}  // namespace vrd
