#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vrd/error.hpp"
#include "vrd/features.hpp"
#include "vrd/models.hpp"
#include "vrd/random.hpp"

// Checkpoint layout, all integers and doubles little-endian:
//   "VRDCKPT1" | u32 header_len | header JSON (config, dims, seed, layer shapes)
//   then per layer in header order: rows*cols f64 weights (row-major), rows f64 bias

namespace vrd {

inline constexpr char kCheckpointMagic[8] = {'V', 'R', 'D', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json checkpoint_header(const Model& model) {
  nlohmann::ordered_json h;
  h["format_version"] = kCheckpointVersion;
  h["variant"] = model.config().variant_name();
  h["fusion_space"] = std::string(to_string(model.config().fusion_space));
  h["spatial_encoding"] = std::string(to_string(model.config().spatial_encoding));
  h["num_predicates"] = model.dims().num_predicates;
  h["word_dim"] = model.dims().word_dim;
  h["feature_dim"] = model.dims().feature_dim;
  h["seed"] = model.seed();
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  auto add = [&](const char* name, const std::optional<LinearLayer>& l) {
    if (!l) return;
    layers.push_back({{"name", name}, {"rows", l->outputs()}, {"cols", l->inputs()}});
  };
  add("language", model.language());
  add("visual", model.visual());
  h["layers"] = std::move(layers);
  return h;
}

inline void write_checkpoint(std::ostream& out, const Model& model) {
  const std::string header = checkpoint_header(model).dump();
  out.write(kCheckpointMagic, 8);
  const auto len = static_cast<std::uint32_t>(header.size());
  const char lb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                      static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  out.write(lb, 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto* l : {&model.language(), &model.visual()}) {
    if (!*l) continue;
    for (double w : (*l)->weights()) detail::put_f64(out, w);
    for (double b : (*l)->bias()) detail::put_f64(out, b);
  }
  if (!out) throw Error("failed writing checkpoint");
}

inline Model read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw ParseError(0, "not a checkpoint file");
  }
  unsigned char lb[4];
  if (!in.read(reinterpret_cast<char*>(lb), 4)) throw ParseError(0, "truncated checkpoint");
  const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (static_cast<std::uint32_t>(lb[3]) << 24);
  if (len > (1u << 24)) throw ParseError(0, "implausible checkpoint header length");
  std::string header(len, '\0');
  if (!in.read(header.data(), len)) throw ParseError(0, "truncated checkpoint");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
    if (h.at("format_version").get<int>() != kCheckpointVersion) {
      throw ParseError(0, "unsupported checkpoint version " + h.at("format_version").dump());
    }
    ModelConfig cfg = ModelConfig::from_variant(h.at("variant").get<std::string>());
    cfg.fusion_space = parse_fusion_space(h.at("fusion_space").get<std::string>());
    cfg.spatial_encoding = parse_spatial_encoding(h.at("spatial_encoding").get<std::string>());
    ModelDims dims{h.at("num_predicates").get<std::size_t>(), h.at("word_dim").get<std::size_t>(),
                   h.at("feature_dim").get<std::size_t>()};
    std::optional<LinearLayer> lang;
    std::optional<LinearLayer> vis;
    for (const auto& l : h.at("layers")) {
      const auto rows = l.at("rows").get<std::size_t>();
      const auto cols = l.at("cols").get<std::size_t>();
      if (rows * cols > (std::size_t{1} << 32)) throw ParseError(0, "implausible layer shape");
      std::vector<double> w(rows * cols);
      std::vector<double> b(rows);
      for (auto& x : w) x = detail::get_f64(in);
      for (auto& x : b) x = detail::get_f64(in);
      const auto name = l.at("name").get<std::string>();
      LinearLayer layer(rows, cols, std::move(w), std::move(b));
      if (name == "language") {
        lang = std::move(layer);
      } else if (name == "visual") {
        vis = std::move(layer);
      } else {
        throw ParseError(0, "unknown checkpoint layer '" + name + "'");
      }
    }
    return Model(cfg, dims, std::move(lang), std::move(vis), h.at("seed").get<std::uint64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("bad checkpoint header: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(out, model);
}

inline Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

/// Human-readable companion: header fields, predicate names and parameter checksum.
inline nlohmann::ordered_json checkpoint_sidecar(const Model& model,
                                                 const std::vector<std::string>& predicate_names) {
  auto j = checkpoint_header(model);
  j["checksum"] = hex64(model.checksum());
  j["predicates"] = predicate_names;
  return j;
}

}  // namespace vrd
