#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vrd/error.hpp"
#include "vrd/geometry.hpp"
#include "vrd/random.hpp"

namespace vrd {

using FeatureVector = std::vector<double>;

/// Box rounded to the nearest integer pixel (halves away from zero).
using QuantizedBox = std::array<std::int64_t, 4>;

inline QuantizedBox quantize(const BoundingBox& b) noexcept {
  return {std::llround(b.x_min()), std::llround(b.y_min()), std::llround(b.x_max()),
          std::llround(b.y_max())};
}

inline std::string describe_key(std::string_view image_id, const QuantizedBox& q) {
  return std::string(image_id) + " [" + std::to_string(q[0]) + "," + std::to_string(q[1]) + "," +
         std::to_string(q[2]) + "," + std::to_string(q[3]) + "]";
}

// Source of visual features for a union box. Implementations must be
// deterministic and safe for concurrent resolve() calls.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t dimension() const noexcept = 0;
  virtual FeatureVector resolve(std::string_view image_id, const BoundingBox& box) const = 0;
};

class FileFeatureProvider final : public FeatureProvider {
 public:
  explicit FileFeatureProvider(std::size_t dimension) : dim_(dimension) {}

  std::size_t dimension() const noexcept override { return dim_; }
  std::size_t size() const noexcept { return table_.size(); }

  void add(std::string image_id, const QuantizedBox& box, FeatureVector v) {
    if (v.size() != dim_) {
      throw InvalidArgument("feature for " + describe_key(image_id, box) + " has dimension " +
                            std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
    const std::string what = describe_key(image_id, box);
    if (!table_.emplace(Key{std::move(image_id), box}, std::move(v)).second) {
      throw InvalidArgument("duplicate feature key " + what);
    }
  }

  FeatureVector resolve(std::string_view image_id, const BoundingBox& box) const override {
    const auto q = quantize(box);
    auto it = table_.find(Key{std::string(image_id), q});
    if (it == table_.end()) throw NotFound("feature not found: " + describe_key(image_id, q));
    return it->second;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [k, v] : table_) fn(k.first, k.second, v);
  }

 private:
  using Key = std::pair<std::string, QuantizedBox>;
  std::size_t dim_;
  std::map<Key, FeatureVector> table_;
};

/// Seeded hash of (image_id, quantized box) expanded to values in [-1, 1].
class SyntheticFeatureProvider final : public FeatureProvider {
 public:
  SyntheticFeatureProvider(std::uint64_t seed, std::size_t dimension)
      : seed_(seed), dim_(dimension) {
    if (dim_ == 0) throw InvalidArgument("synthetic feature dimension must be positive");
  }

  std::size_t dimension() const noexcept override { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  FeatureVector resolve(std::string_view image_id, const BoundingBox& box) const override {
    Fnv1a64 h;
    h.u64(seed_).str(image_id);
    for (auto c : quantize(box)) h.i64(c);
    std::uint64_t state = h.digest();
    FeatureVector v(dim_);
    for (auto& x : v) x = 2.0 * unit_double(splitmix64(state)) - 1.0;
    return v;
  }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Feature files. JSONL records {"image_id", "box": [4 ints], "feature": [F]};
// the binary layout (little-endian) carries identical content:
//   "VRDFEAT1" | u64 F | u64 count | count x (u32 id_len | id | 4 x i64 | F x f64)

inline constexpr char kFeatureMagic[8] = {'V', 'R', 'D', 'F', 'E', 'A', 'T', '1'};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError(0, "truncated binary stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

inline double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

inline FileFeatureProvider load_feature_jsonl(std::istream& in, std::size_t expected_dim) {
  std::unique_ptr<FileFeatureProvider> provider;
  if (expected_dim > 0) provider = std::make_unique<FileFeatureProvider>(expected_dim);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("image_id") || !j["image_id"].is_string()) {
      throw ParseError(line_no, "field 'image_id': missing or not a string");
    }
    const auto& box = j.contains("box") ? j["box"] : nlohmann::json();
    if (!box.is_array() || box.size() != 4) throw ParseError(line_no, "field 'box': expected 4 integers");
    QuantizedBox q{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!box[i].is_number_integer()) throw ParseError(line_no, "field 'box': expected 4 integers");
      q[i] = box[i].get<std::int64_t>();
    }
    const auto& feat = j.contains("feature") ? j["feature"] : nlohmann::json();
    if (!feat.is_array() || feat.empty()) throw ParseError(line_no, "field 'feature': expected a non-empty array");
    FeatureVector v;
    v.reserve(feat.size());
    for (const auto& x : feat) {
      if (!x.is_number() || !std::isfinite(x.get<double>())) {
        throw ParseError(line_no, "field 'feature': non-finite or non-numeric component");
      }
      v.push_back(x.get<double>());
    }
    if (!provider) provider = std::make_unique<FileFeatureProvider>(v.size());
    if (v.size() != provider->dimension()) {
      throw ParseError(line_no, "field 'feature': dimension " + std::to_string(v.size()) +
                                    " does not match " + std::to_string(provider->dimension()));
    }
    try {
      provider->add(j["image_id"].get<std::string>(), q, std::move(v));
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!provider) provider = std::make_unique<FileFeatureProvider>(expected_dim);
  return std::move(*provider);
}

inline FileFeatureProvider load_feature_binary(std::istream& in, std::size_t expected_dim) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kFeatureMagic, 8) != 0) {
    throw ParseError(0, "not a binary feature file");
  }
  const auto dim = get_u64(in);
  const auto count = get_u64(in);
  if (dim == 0 || dim > (1u << 24)) throw ParseError(0, "implausible feature dimension");
  if (expected_dim > 0 && dim != expected_dim) {
    throw ParseError(0, "feature dimension " + std::to_string(dim) + " does not match " +
                            std::to_string(expected_dim));
  }
  FileFeatureProvider provider(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    unsigned char lb[4];
    if (!in.read(reinterpret_cast<char*>(lb), 4)) throw ParseError(0, "truncated binary stream");
    const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (static_cast<std::uint32_t>(lb[3]) << 24);
    std::string id(len, '\0');
    if (!in.read(id.data(), len)) throw ParseError(0, "truncated binary stream");
    QuantizedBox q{};
    for (auto& c : q) c = static_cast<std::int64_t>(get_u64(in));
    FeatureVector v(dim);
    for (auto& x : v) x = get_f64(in);
    provider.add(std::move(id), q, std::move(v));
  }
  return provider;
}

}  // namespace detail

/// Loads either format; the binary one is recognised by its magic bytes.
/// `expected_dim` = 0 infers the dimension from the first record.
inline FileFeatureProvider load_features(std::istream& in, std::size_t expected_dim = 0) {
  char peek[8] = {};
  in.read(peek, 8);
  const auto got = in.gcount();
  in.clear();
  in.seekg(0);
  if (got == 8 && std::memcmp(peek, kFeatureMagic, 8) == 0) {
    return detail::load_feature_binary(in, expected_dim);
  }
  return detail::load_feature_jsonl(in, expected_dim);
}

inline void write_features_jsonl(std::ostream& out, const FileFeatureProvider& p) {
  p.for_each([&](const std::string& id, const QuantizedBox& q, const FeatureVector& v) {
    nlohmann::ordered_json j;
    j["image_id"] = id;
    j["box"] = q;
    j["feature"] = v;
    out << j.dump() << '\n';
  });
}

inline void write_features_binary(std::ostream& out, const FileFeatureProvider& p) {
  out.write(kFeatureMagic, 8);
  detail::put_u64(out, p.dimension());
  detail::put_u64(out, p.size());
  p.for_each([&](const std::string& id, const QuantizedBox& q, const FeatureVector& v) {
    const auto len = static_cast<std::uint32_t>(id.size());
    const char lb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                        static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
    out.write(lb, 4);
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    for (auto c : q) detail::put_u64(out, static_cast<std::uint64_t>(c));
    for (double x : v) detail::put_f64(out, x);
  });
}

}  // namespace vrd
