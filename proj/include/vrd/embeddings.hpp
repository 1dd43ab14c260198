#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrd/error.hpp"

namespace vrd {

using WordVector = std::vector<double>;

/// Token -> vector map with a fixed dimension.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dimension = 300) : dim_(dimension) {
    if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
  }

  std::size_t dimension() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool empty() const noexcept { return vectors_.empty(); }
  std::size_t duplicate_count() const noexcept { return duplicates_; }

  /// Inserts or replaces; replacing bumps the duplicate counter.
  void insert(std::string token, WordVector v) {
    if (v.size() != dim_) {
      throw InvalidArgument("vector for '" + token + "' has " + std::to_string(v.size()) +
                            " components, expected " + std::to_string(dim_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw InvalidArgument("vector for '" + token + "' is not finite");
    }
    auto [it, inserted] = vectors_.insert_or_assign(std::move(token), std::move(v));
    if (!inserted) ++duplicates_;
  }

  const WordVector* find(std::string_view token) const {
    auto it = vectors_.find(std::string(token));
    return it == vectors_.end() ? nullptr : &it->second;
  }

  // Ordered by token, which gives nearest_neighbors its tie-break for free.
  const std::map<std::string, WordVector>& entries() const noexcept { return vectors_; }

 private:
  std::size_t dim_;
  std::size_t duplicates_ = 0;
  std::map<std::string, WordVector> vectors_;
};

// word2vec text format: "token v1 ... vD" per line. A leading "<count> <D>"
// header line is tolerated. Duplicate tokens: last one wins.
inline EmbeddingStore load_embeddings(std::istream& in, std::size_t dimension = 300) {
  EmbeddingStore store(dimension);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    fields.clear();
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto b = rest.find_first_not_of(" \t\r");
      if (b == std::string_view::npos) break;
      rest.remove_prefix(b);
      const auto e = rest.find_first_of(" \t\r");
      fields.push_back(rest.substr(0, e));
      rest.remove_prefix(e == std::string_view::npos ? rest.size() : e);
    }
    if (fields.empty()) continue;

    auto parse = [&](std::string_view f, double& out) {
      const auto* end = f.data() + f.size();
      auto [ptr, ec] = std::from_chars(f.data(), end, out);
      return ec == std::errc() && ptr == end;
    };

    if (line_no == 1 && fields.size() == 2) {
      double count = 0.0;
      double dim = 0.0;
      if (parse(fields[0], count) && parse(fields[1], dim) &&
          dim == static_cast<double>(dimension)) {
        continue;
      }
    }
    if (fields.size() != dimension + 1) {
      throw ParseError(line_no, "expected token followed by " + std::to_string(dimension) +
                                    " values, found " + std::to_string(fields.size() - 1));
    }
    WordVector v(dimension);
    for (std::size_t i = 0; i < dimension; ++i) {
      if (!parse(fields[i + 1], v[i]) || !std::isfinite(v[i])) {
        throw ParseError(line_no, "component " + std::to_string(i + 1) + " is not a finite number");
      }
    }
    store.insert(std::string(fields[0]), std::move(v));
  }
  return store;
}

/// Single-token names map directly; multi-word names ("traffic light") to the
/// componentwise mean of their tokens. Any missing token is an error.
inline WordVector lookup(const EmbeddingStore& store, std::string_view name) {
  if (const auto* v = store.find(name)) return *v;

  std::vector<std::string> tokens;
  std::istringstream ss{std::string(name)};
  for (std::string tok; ss >> tok;) tokens.push_back(tok);
  if (tokens.empty()) throw NotFound("empty category name");
  if (tokens.size() == 1) throw NotFound("unknown token '" + tokens[0] + "'");

  WordVector mean(store.dimension(), 0.0);
  std::vector<std::string> missing;
  for (const auto& tok : tokens) {
    const auto* v = store.find(tok);
    if (v == nullptr) {
      missing.push_back(tok);
      continue;
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += (*v)[i];
  }
  if (!missing.empty()) {
    std::string msg = "unknown token";
    msg += missing.size() > 1 ? "s" : "";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", '" : " '") + missing[i] + "'";
    throw NotFound(msg + " in '" + std::string(name) + "'");
  }
  const double n = static_cast<double>(tokens.size());
  for (auto& x : mean) x /= n;
  return mean;
}

/// [lookup(subject), lookup(object)], length 2D.
inline std::vector<double> pair_vector(const EmbeddingStore& store, std::string_view subject,
                                       std::string_view object) {
  std::vector<double> out = lookup(store, subject);
  const WordVector o = lookup(store, object);
  out.insert(out.end(), o.begin(), o.end());
  return out;
}

/// 0 when either vector has zero norm.
inline double cosine_similarity(const WordVector& a, const WordVector& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_similarity: dimension mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct Neighbor {
  std::string name;
  double similarity = 0.0;
};

/// Top-k store entries by cosine similarity to `name`, excluding the query
/// itself. Ties go to the lexicographically smaller name.
inline std::vector<Neighbor> nearest_neighbors(const EmbeddingStore& store, std::string_view name,
                                               int k) {
  if (k <= 0) return {};
  const WordVector query = lookup(store, name);
  std::vector<Neighbor> all;
  all.reserve(store.size());
  for (const auto& [token, vec] : store.entries()) {
    if (token == name) continue;
    all.push_back({token, cosine_similarity(query, vec)});
  }
  const auto take = std::min(all.size(), static_cast<std::size_t>(k));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.name < b.name;
                    });
  all.resize(take);
  return all;
}

}  // namespace vrd
