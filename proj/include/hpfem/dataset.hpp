#pragma once

// Refinement decisions encoded as training rows: 8 geometric/order features,
// an h-class label, and up to four son order pairs. CSV persistence is
// bit-exact round-trip.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpfem/estimate.hpp"
#include "hpfem/mesh.hpp"

namespace hpfem {

enum class HClass { None = 0, HX = 1, HY = 2, HXY = 3 };

struct DecisionRecord {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double dx = 0, dy = 0;  // always x2-x1, y2-y1
  int px = 0, py = 0;
  HClass href = HClass::None;
  // Son order pairs in fixed geometric order (left/right, bottom/top, or
  // SW/SE/NW/NE). Inactive sons are exactly (0,0). For href None, son 0
  // carries the element's (possibly p-enriched) orders.
  std::array<std::array<int, 2>, 4> sons{};
};

namespace detail {

inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Model-boundary features: raw coordinates, log-scaled dimensions, orders
// scaled to [0,1].
inline std::array<double, 8> encode_input(const Element& e) {
  if (!(e.bounds.width() > 0.0) || !(e.bounds.height() > 0.0))
    throw std::invalid_argument("encode_input: degenerate element");
  return {e.bounds.x1,
          e.bounds.y1,
          e.bounds.x2,
          e.bounds.y2,
          std::log2(e.bounds.width()),
          std::log2(e.bounds.height()),
          e.orders.px / 9.0,
          e.orders.py / 9.0};
}

// Label tuple for an executed decision, or the explicit "keep as is" row
// when no refinement was selected.
inline DecisionRecord encode_output(const std::optional<CandidateEvaluation>& decision,
                                    const Element& e) {
  DecisionRecord r;
  r.x1 = e.bounds.x1;
  r.y1 = e.bounds.y1;
  r.x2 = e.bounds.x2;
  r.y2 = e.bounds.y2;
  r.dx = e.bounds.width();
  r.dy = e.bounds.height();
  r.px = e.orders.px;
  r.py = e.orders.py;
  if (!decision) {
    r.href = HClass::None;
    r.sons[0] = {e.orders.px, e.orders.py};
    return r;
  }
  const Refinement& ref = decision->candidate.refinement;
  switch (ref.kind) {
    case RefineKind::PRef: r.href = HClass::None; break;
    case RefineKind::HX: r.href = HClass::HX; break;
    case RefineKind::HY: r.href = HClass::HY; break;
    case RefineKind::HXY: r.href = HClass::HXY; break;
  }
  for (int s = 0; s < ref.son_count(); ++s) {
    if (ref.sons[s].px < 1 || ref.sons[s].px > kMaxOrder || ref.sons[s].py < 1 ||
        ref.sons[s].py > kMaxOrder)
      throw std::invalid_argument("encode_output: son order outside 1..9");
    r.sons[s] = {ref.sons[s].px, ref.sons[s].py};
  }
  return r;
}

// Inverse of encode_output: the refinement to apply, or nullopt for a
// genuine "leave unchanged" row.
inline std::optional<Refinement> decode_decision(const DecisionRecord& r) {
  const Orders son0{r.sons[0][0], r.sons[0][1]};
  switch (r.href) {
    case HClass::None:
      if (son0.px == r.px && son0.py == r.py) return std::nullopt;
      return Refinement::p_ref(son0);
    case HClass::HX:
      return Refinement::h_x(son0, {r.sons[1][0], r.sons[1][1]});
    case HClass::HY:
      return Refinement::h_y(son0, {r.sons[1][0], r.sons[1][1]});
    case HClass::HXY:
      return Refinement::h_xy(son0, {r.sons[1][0], r.sons[1][1]},
                              {r.sons[2][0], r.sons[2][1]}, {r.sons[3][0], r.sons[3][1]});
  }
  throw std::logic_error("decode_decision: bad h-class");
}

inline constexpr const char* kDatasetHeader =
    "x1,y1,x2,y2,dx,dy,px,py,href,p1x,p1y,p2x,p2y,p3x,p3y,p4x,p4y";

namespace detail {

inline void validate_record(const DecisionRecord& r, const std::string& where) {
  auto fail = [&](const std::string& msg) {
    throw std::runtime_error("invalid dataset row " + where + ": " + msg);
  };
  if (!(r.x2 > r.x1) || !(r.y2 > r.y1)) fail("degenerate bounds");
  if (r.dx != r.x2 - r.x1 || r.dy != r.y2 - r.y1) fail("dimension fields mismatch bounds");
  if (r.px < 1 || r.px > kMaxOrder || r.py < 1 || r.py > kMaxOrder)
    fail("element orders outside 1..9");
  const int h = static_cast<int>(r.href);
  if (h < 0 || h > 3) fail("h-class outside 0..3");
  const int active = r.href == HClass::None ? 1 : (r.href == HClass::HXY ? 4 : 2);
  for (int s = 0; s < 4; ++s) {
    for (int c = 0; c < 2; ++c)
      if (r.sons[s][c] < 0 || r.sons[s][c] > kMaxOrder) fail("son order outside 0..9");
    const bool zero = r.sons[s][0] == 0 && r.sons[s][1] == 0;
    if (s < active && zero) fail("active son has order zero");
    if (s >= active && !zero) fail("inactive son has nonzero orders");
  }
}

}  // namespace detail

inline void write_dataset(const std::vector<DecisionRecord>& records, std::ostream& out) {
  out << kDatasetHeader << "\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DecisionRecord& r = records[i];
    detail::validate_record(r, "(record " + std::to_string(i) + ")");
    out << detail::g17(r.x1) << ',' << detail::g17(r.y1) << ',' << detail::g17(r.x2) << ','
        << detail::g17(r.y2) << ',' << detail::g17(r.dx) << ',' << detail::g17(r.dy) << ','
        << r.px << ',' << r.py << ',' << static_cast<int>(r.href);
    for (int s = 0; s < 4; ++s) out << ',' << r.sons[s][0] << ',' << r.sons[s][1];
    out << "\n";
  }
}

inline void write_dataset(const std::vector<DecisionRecord>& records,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(records, out);
}

inline std::vector<DecisionRecord> read_dataset(std::istream& in,
                                                const std::string& origin = "") {
  const std::string suffix = origin.empty() ? "" : " in " + origin;
  std::string line;
  if (!std::getline(in, line) || line != kDatasetHeader)
    throw std::runtime_error("malformed dataset header at line 1" + suffix);
  std::vector<DecisionRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "at line " + std::to_string(lineno) + suffix;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    DecisionRecord r;
    int href = -1;
    if (!(ss >> r.x1 >> r.y1 >> r.x2 >> r.y2 >> r.dx >> r.dy >> r.px >> r.py >> href >>
          r.sons[0][0] >> r.sons[0][1] >> r.sons[1][0] >> r.sons[1][1] >> r.sons[2][0] >>
          r.sons[2][1] >> r.sons[3][0] >> r.sons[3][1]))
      throw std::runtime_error("malformed dataset row " + where);
    std::string rest;
    if (ss >> rest) throw std::runtime_error("trailing fields in dataset row " + where);
    if (href < 0 || href > 3)
      throw std::runtime_error("invalid dataset row " + where + ": h-class outside 0..3");
    r.href = static_cast<HClass>(href);
    detail::validate_record(r, where);
    out.push_back(r);
  }
  return out;
}

inline std::vector<DecisionRecord> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset(in, path);
}

}  // namespace hpfem
