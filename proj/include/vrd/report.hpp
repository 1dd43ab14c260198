#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <tuple>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "vrd/evaluation.hpp"

namespace vrd {

/// Recall results of one model variant.
struct VariantResults {
  std::string variant;
  std::vector<RecallReport> reports;
};

inline nlohmann::ordered_json to_json(const RecallReport& r) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(r.task));
  j["n"] = r.n;
  j["k"] = r.k;
  j["recall"] = r.recall;
  j["matched"] = r.matched;
  j["total_gt"] = r.total_gt;
  j["zero_shot"] = r.zero_shot;
  j["empty"] = r.empty;
  return j;
}

inline RecallReport recall_report_from_json(const nlohmann::json& j) {
  RecallReport r;
  r.task = parse_task(j.at("task").get<std::string>());
  r.n = j.at("n").get<std::size_t>();
  r.k = j.at("k").get<std::size_t>();
  r.recall = j.at("recall").get<double>();
  r.matched = j.at("matched").get<std::size_t>();
  r.total_gt = j.at("total_gt").get<std::size_t>();
  r.zero_shot = j.value("zero_shot", false);
  r.empty = j.value("empty", false);
  return r;
}

inline nlohmann::ordered_json to_json(const VariantResults& v) {
  nlohmann::ordered_json j;
  j["variant"] = v.variant;
  j["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : v.reports) j["reports"].push_back(to_json(r));
  return j;
}

inline VariantResults variant_results_from_json(const nlohmann::json& j) {
  try {
    VariantResults v;
    v.variant = j.at("variant").get<std::string>();
    for (const auto& r : j.at("reports")) v.reports.push_back(recall_report_from_json(r));
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("bad report JSON: ") + e.what());
  }
}

namespace detail {

struct Column {
  Task task;
  bool zero_shot;
  std::size_t k;
  std::size_t n;
  auto key() const { return std::tuple(static_cast<int>(task), zero_shot, k, n); }
  friend bool operator<(const Column& a, const Column& b) { return a.key() < b.key(); }
};

inline std::vector<Column> columns(const std::vector<VariantResults>& rows) {
  std::vector<Column> cols;
  for (const auto& row : rows) {
    for (const auto& r : row.reports) {
      Column c{r.task, r.zero_shot, r.k, r.n};
      if (std::find_if(cols.begin(), cols.end(), [&](const Column& x) { return x.key() == c.key(); }) ==
          cols.end()) {
        cols.push_back(c);
      }
    }
  }
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline const RecallReport* find_cell(const VariantResults& row, const Column& c) {
  for (const auto& r : row.reports) {
    if (r.task == c.task && r.zero_shot == c.zero_shot && r.k == c.k && r.n == c.n) return &r;
  }
  return nullptr;
}

inline std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

inline std::string column_label(const Column& c) {
  return "R@" + std::to_string(c.n) + " k=" + std::to_string(c.k);
}

}  // namespace detail

// One block per (task, zero-shot) pair; rows are variants, columns R@n x k
// with k as the outer index. Values are percentages.
inline void write_table(std::ostream& out, const std::vector<VariantResults>& rows) {
  const auto cols = detail::columns(rows);
  std::size_t name_w = 7;
  for (const auto& r : rows) name_w = std::max(name_w, r.variant.size());

  std::size_t i = 0;
  bool first = true;
  while (i < cols.size()) {
    std::size_t j = i;
    while (j < cols.size() && cols[j].task == cols[i].task && cols[j].zero_shot == cols[i].zero_shot) ++j;
    if (!first) out << '\n';
    first = false;
    out << to_string(cols[i].task) << (cols[i].zero_shot ? " (zero-shot)" : "") << '\n';

    std::vector<std::string> labels;
    for (std::size_t c = i; c < j; ++c) labels.push_back(detail::column_label(cols[c]));
    std::vector<std::size_t> widths;
    for (const auto& l : labels) widths.push_back(std::max<std::size_t>(l.size(), 6));

    auto pad = [&](const std::string& s, std::size_t w, bool left) {
      const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
      return left ? s + fill : fill + s;
    };
    out << pad("variant", name_w, true);
    for (std::size_t c = 0; c < labels.size(); ++c) out << " | " << pad(labels[c], widths[c], false);
    out << '\n' << std::string(name_w, '-');
    for (auto w : widths) out << "-+-" << std::string(w, '-');
    out << '\n';
    for (const auto& row : rows) {
      out << pad(row.variant, name_w, true);
      for (std::size_t c = i; c < j; ++c) {
        const auto* cell = detail::find_cell(row, cols[c]);
        out << " | " << pad(cell ? detail::percent(cell->recall) : "-", widths[c - i], false);
      }
      out << '\n';
    }
    i = j;
  }
}

inline void write_csv(std::ostream& out, const std::vector<VariantResults>& rows) {
  out << "variant,task,zero_shot,n,k,recall,matched,total_gt\n";
  for (const auto& row : rows) {
    for (const auto& r : row.reports) {
      out << row.variant << ',' << to_string(r.task) << ',' << (r.zero_shot ? 1 : 0) << ',' << r.n << ','
          << r.k << ',' << nlohmann::json(r.recall).dump() << ',' << r.matched << ',' << r.total_gt << '\n';
    }
  }
}

}  // namespace vrd
