#pragma once

// Quadtree mesh over the L-shaped domain (-1,1)^2 \ (-1,0)^2 with hanging
// nodes kept 1-irregular: an element side is subdivided at most once relative
// to the neighbor across it. Anisotropic h-refinements and p-enrichment are
// supported; element orders never decrease from parent to son.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpfem/shape.hpp"

namespace hpfem {

struct Orders {
  int px = 0;
  int py = 0;
  friend bool operator==(const Orders&, const Orders&) = default;
};

inline bool orders_in_range(Orders o) {
  return o.px >= 1 && o.px <= kMaxOrder && o.py >= 1 && o.py <= kMaxOrder;
}

enum class RefineKind { PRef, HX, HY, HXY };

inline int son_count(RefineKind k) {
  switch (k) {
    case RefineKind::PRef: return 1;
    case RefineKind::HX:
    case RefineKind::HY: return 2;
    case RefineKind::HXY: return 4;
  }
  return 0;
}

// Son ordering: HX = {left, right}, HY = {bottom, top},
// HXY = {SW, SE, NW, NE}. PRef carries the new orders in sons[0].
struct Refinement {
  RefineKind kind = RefineKind::PRef;
  std::array<Orders, 4> sons{};

  int son_count() const { return hpfem::son_count(kind); }

  static Refinement p_ref(Orders o) { return {RefineKind::PRef, {o, {}, {}, {}}}; }
  static Refinement h_x(Orders left, Orders right) {
    return {RefineKind::HX, {left, right, {}, {}}};
  }
  static Refinement h_y(Orders bottom, Orders top) {
    return {RefineKind::HY, {bottom, top, {}, {}}};
  }
  static Refinement h_xy(Orders sw, Orders se, Orders nw, Orders ne) {
    return {RefineKind::HXY, {sw, se, nw, ne}};
  }
};

struct Rect {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double xmid() const { return 0.5 * (x1 + x2); }
  double ymid() const { return 0.5 * (y1 + y2); }
  bool contains(double x, double y) const {
    return x >= x1 && x <= x2 && y >= y1 && y <= y2;
  }
};

enum class Side { West = 0, East = 1, South = 2, North = 3 };
inline constexpr std::array<Side, 4> kSides = {Side::West, Side::East, Side::South,
                                               Side::North};

struct Element {
  int id = -1;
  int level = 0;
  int parent = -1;
  Rect bounds;
  Orders orders;
  std::array<int, 4> children{-1, -1, -1, -1};
  int child_count = 0;
  bool active() const { return child_count == 0; }
};

struct AuditViolation {
  int element_id = -1;
  std::string what;
};

struct AuditReport {
  std::vector<AuditViolation> violations;
  bool ok() const { return violations.empty(); }
};

// ---------------------------------------------------------------------------
// Edge classification. Derived from element geometry on demand; edge orders
// follow the minimum rule. A Sub edge is one half of a Master edge and its
// order equals the master's.
// ---------------------------------------------------------------------------

enum class EdgeKind { Boundary, Regular, Master, Sub };

struct Edge {
  int axis = 0;       // 0: vertical edge on line x = const; 1: horizontal, y = const
  double line = 0;
  double lo = 0, hi = 0;
  EdgeKind kind = EdgeKind::Boundary;
  int elem_minus = -1;  // active element on the negative side of the line
  int elem_plus = -1;
  int master = -1;               // for Sub: index of the containing Master edge
  std::array<int, 2> subs{-1, -1};  // for Master: lower and upper half edges
  int order = 0;
  bool constrained() const { return kind == EdgeKind::Sub; }
  double mid() const { return 0.5 * (lo + hi); }
};

class Mesh;
struct EdgeSet {
  std::vector<Edge> edges;
  // (element id, side) -> index of the edge that coincides with that side.
  std::map<std::pair<int, int>, int> by_side;
  int side_edge(int elem, Side s) const {
    auto it = by_side.find({elem, static_cast<int>(s)});
    return it == by_side.end() ? -1 : it->second;
  }
};

class Mesh {
 public:
  int size() const { return static_cast<int>(elements_.size()); }

  const Element& element(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("mesh: unknown element id");
    return elements_[id];
  }

  int active_count() const {
    int n = 0;
    for (const auto& e : elements_) n += e.active() ? 1 : 0;
    return n;
  }

  std::vector<int> active_ids() const {
    std::vector<int> ids;
    ids.reserve(elements_.size());
    for (const auto& e : elements_)
      if (e.active()) ids.push_back(e.id);
    return ids;
  }

  const std::vector<int>& root_ids() const { return roots_; }

  // Active elements sharing positive-measure contact with the given side.
  std::vector<int> active_neighbors(int id, Side side) const;

  void refine_element(int id, const Refinement& r);

  // Active element containing (x,y); ties on shared edges resolve to the
  // first match in id order.
  int find_active_at(double x, double y) const;

  AuditReport audit() const;

  friend Mesh create_initial_mesh(int order);
  friend Mesh read_mesh_snapshot(std::istream& in);
  friend Mesh uniform_refine(const Mesh& mesh);

 private:
  // Splits without the 1-irregularity propagation; callers guarantee validity.
  void split(int id, const Refinement& r);
  void ensure_one_irregular(int id, RefineKind kind);

  std::vector<Element> elements_;
  std::vector<int> roots_;
};

inline Mesh create_initial_mesh(int order) {
  if (order < 1 || order > kMaxOrder)
    throw std::invalid_argument("create_initial_mesh: order out of range");
  Mesh m;
  const std::array<Rect, 3> squares = {Rect{-1.0, 0.0, 0.0, 1.0}, Rect{0.0, 0.0, 1.0, 1.0},
                                       Rect{0.0, -1.0, 1.0, 0.0}};
  for (int i = 0; i < 3; ++i) {
    Element e;
    e.id = i;
    e.level = 0;
    e.bounds = squares[i];
    e.orders = {order, order};
    m.elements_.push_back(e);
    m.roots_.push_back(i);
  }
  return m;
}

inline std::vector<int> Mesh::active_neighbors(int id, Side side) const {
  const Element& e = element(id);
  std::vector<int> out;
  for (const auto& f : elements_) {
    if (!f.active() || f.id == id) continue;
    bool touch = false;
    switch (side) {
      case Side::West:
        touch = f.bounds.x2 == e.bounds.x1 && f.bounds.y1 < e.bounds.y2 &&
                f.bounds.y2 > e.bounds.y1;
        break;
      case Side::East:
        touch = f.bounds.x1 == e.bounds.x2 && f.bounds.y1 < e.bounds.y2 &&
                f.bounds.y2 > e.bounds.y1;
        break;
      case Side::South:
        touch = f.bounds.y2 == e.bounds.y1 && f.bounds.x1 < e.bounds.x2 &&
                f.bounds.x2 > e.bounds.x1;
        break;
      case Side::North:
        touch = f.bounds.y1 == e.bounds.y2 && f.bounds.x1 < e.bounds.x2 &&
                f.bounds.x2 > e.bounds.x1;
        break;
    }
    if (touch) out.push_back(f.id);
  }
  return out;
}

inline void Mesh::split(int id, const Refinement& r) {
  // elements_ may reallocate below; copy what we need from the parent first.
  const Rect b = elements_[id].bounds;
  const int son_level = elements_[id].level + 1;
  const double xm = b.xmid(), ym = b.ymid();
  std::vector<Rect> rects;
  switch (r.kind) {
    case RefineKind::PRef:
      elements_[id].orders = r.sons[0];
      return;
    case RefineKind::HX:
      rects = {Rect{b.x1, b.y1, xm, b.y2}, Rect{xm, b.y1, b.x2, b.y2}};
      break;
    case RefineKind::HY:
      rects = {Rect{b.x1, b.y1, b.x2, ym}, Rect{b.x1, ym, b.x2, b.y2}};
      break;
    case RefineKind::HXY:
      rects = {Rect{b.x1, b.y1, xm, ym}, Rect{xm, b.y1, b.x2, ym},
               Rect{b.x1, ym, xm, b.y2}, Rect{xm, ym, b.x2, b.y2}};
      break;
  }
  for (std::size_t s = 0; s < rects.size(); ++s) {
    Element son;
    son.id = size();
    son.level = son_level;
    son.parent = id;
    son.bounds = rects[s];
    son.orders = r.sons[s];
    elements_.push_back(son);
    // push_back may reallocate; re-reference the parent each time.
    elements_[id].children[s] = son.id;
    elements_[id].child_count = static_cast<int>(s) + 1;
  }
}

inline void Mesh::ensure_one_irregular(int id, RefineKind kind) {
  // Sides whose edges the split subdivides: a neighbor whose side strictly
  // contains ours would become 2-irregular, so it is split isotropically
  // first (inheriting its orders), recursively.
  std::vector<Side> affected;
  if (kind == RefineKind::HX) affected = {Side::South, Side::North};
  else if (kind == RefineKind::HY) affected = {Side::West, Side::East};
  else affected = {Side::West, Side::East, Side::South, Side::North};

  bool changed = true;
  while (changed) {
    changed = false;
    for (Side s : affected) {
      const Element e = element(id);
      for (int nid : active_neighbors(id, s)) {
        const Element& n = element(nid);
        bool coarser = false;
        if (s == Side::West || s == Side::East)
          coarser = n.bounds.y1 <= e.bounds.y1 && n.bounds.y2 >= e.bounds.y2 &&
                    n.bounds.height() > e.bounds.height();
        else
          coarser = n.bounds.x1 <= e.bounds.x1 && n.bounds.x2 >= e.bounds.x2 &&
                    n.bounds.width() > e.bounds.width();
        if (coarser) {
          refine_element(nid, Refinement::h_xy(n.orders, n.orders, n.orders, n.orders));
          changed = true;
          break;
        }
      }
      if (changed) break;
    }
  }
}

inline void Mesh::refine_element(int id, const Refinement& r) {
  const Element& e = element(id);  // throws on unknown id
  if (!e.active()) throw std::invalid_argument("refine_element: element is inactive");
  for (int s = 0; s < r.son_count(); ++s) {
    if (!orders_in_range(r.sons[s]))
      throw std::invalid_argument("refine_element: son orders out of range");
    if (r.sons[s].px < e.orders.px || r.sons[s].py < e.orders.py)
      throw std::invalid_argument("refine_element: orders may not decrease");
  }
  if (r.kind != RefineKind::PRef) ensure_one_irregular(id, r.kind);
  split(id, r);
}

inline Mesh uniform_refine(const Mesh& mesh) {
  Mesh out = mesh;
  const std::vector<int> actives = mesh.active_ids();
  for (int id : actives) {
    const Orders o = out.elements_[id].orders;
    if (o.px + 1 > kMaxOrder || o.py + 1 > kMaxOrder)
      throw std::domain_error("uniform_refine: element order cap reached");
    const Orders up{o.px + 1, o.py + 1};
    // Every active element splits at its midpoint, so relative side
    // subdivision is unchanged and no propagation is required.
    out.split(id, Refinement::h_xy(up, up, up, up));
  }
  return out;
}

inline int Mesh::find_active_at(double x, double y) const {
  int cur = -1;
  for (int rid : roots_) {
    if (elements_[rid].bounds.contains(x, y)) {
      cur = rid;
      break;
    }
  }
  if (cur < 0) throw std::domain_error("find_active_at: point outside the domain");
  while (!elements_[cur].active()) {
    int next = -1;
    for (int c = 0; c < elements_[cur].child_count; ++c) {
      const int cid = elements_[cur].children[c];
      if (elements_[cid].bounds.contains(x, y)) {
        next = cid;
        break;
      }
    }
    if (next < 0) throw std::logic_error("find_active_at: children do not cover parent");
    cur = next;
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Edge classification
// ---------------------------------------------------------------------------

namespace detail {

struct SideRec {
  int elem;
  Side side;
  int axis;     // 0: vertical line, 1: horizontal line
  double line;  // constant coordinate
  double lo, hi;
  bool from_plus;  // element lies on the positive side of the line
};

inline SideRec side_record(const Element& e, Side s) {
  const Rect& b = e.bounds;
  switch (s) {
    case Side::West: return {e.id, s, 0, b.x1, b.y1, b.y2, true};
    case Side::East: return {e.id, s, 0, b.x2, b.y1, b.y2, false};
    case Side::South: return {e.id, s, 1, b.y1, b.x1, b.x2, true};
    case Side::North: return {e.id, s, 1, b.y2, b.x1, b.x2, false};
  }
  throw std::logic_error("side_record: bad side");
}

// True when [lo,hi] lies within one straight piece of the L-domain boundary.
inline bool on_lshape_boundary(int axis, double line, double lo, double hi) {
  if (axis == 0) {
    if (line == -1.0) return lo >= 0.0 && hi <= 1.0;
    if (line == 1.0) return lo >= -1.0 && hi <= 1.0;
    if (line == 0.0) return lo >= -1.0 && hi <= 0.0;
    return false;
  }
  if (line == 1.0) return lo >= -1.0 && hi <= 1.0;
  if (line == -1.0) return lo >= 0.0 && hi <= 1.0;
  if (line == 0.0) return lo >= -1.0 && hi <= 0.0;
  return false;
}

}  // namespace detail

// Classifies every active element side into boundary, regular, master or sub
// edges and assigns minimum-rule orders. Geometry problems (gaps, overlaps,
// 2-irregular sides) are reported through `violations` when given, otherwise
// thrown.
inline EdgeSet classify_edges(const Mesh& mesh,
                              std::vector<AuditViolation>* violations = nullptr) {
  using detail::SideRec;
  auto report = [&](int elem, const std::string& what) {
    if (violations) violations->push_back({elem, what});
    else throw std::invalid_argument("invalid mesh: " + what);
  };

  std::vector<SideRec> sides;
  for (int id : mesh.active_ids())
    for (Side s : kSides) sides.push_back(detail::side_record(mesh.element(id), s));

  // Group records per geometric line.
  std::map<std::pair<int, double>, std::vector<int>> lines;
  for (std::size_t i = 0; i < sides.size(); ++i)
    lines[{sides[i].axis, sides[i].line}].push_back(static_cast<int>(i));

  EdgeSet set;
  std::map<std::tuple<int, double, double, double>, int> edge_index;
  auto get_edge = [&](const SideRec& s) -> Edge& {
    const auto key = std::make_tuple(s.axis, s.line, s.lo, s.hi);
    auto it = edge_index.find(key);
    if (it == edge_index.end()) {
      Edge e;
      e.axis = s.axis;
      e.line = s.line;
      e.lo = s.lo;
      e.hi = s.hi;
      it = edge_index.emplace(key, static_cast<int>(set.edges.size())).first;
      set.edges.push_back(e);
    }
    return set.edges[it->second];
  };
  auto edge_id = [&](const SideRec& s) {
    get_edge(s);
    return edge_index.at({s.axis, s.line, s.lo, s.hi});
  };

  for (auto& [key, recs] : lines) {
    for (int i : recs) {
      const SideRec& s = sides[i];
      std::vector<int> opp;
      for (int j : recs) {
        const SideRec& t = sides[j];
        if (t.from_plus != s.from_plus && t.lo < s.hi && t.hi > s.lo) opp.push_back(j);
      }
      auto attach_owner = [&](Edge& e, const SideRec& rec) {
        (rec.from_plus ? e.elem_plus : e.elem_minus) = rec.elem;
      };
      if (opp.empty()) {
        if (!detail::on_lshape_boundary(s.axis, s.line, s.lo, s.hi)) {
          report(s.elem, "interior element side has no neighbor");
          continue;
        }
        Edge& e = get_edge(s);
        e.kind = EdgeKind::Boundary;
        attach_owner(e, s);
        set.by_side[{s.elem, static_cast<int>(s.side)}] = edge_id(s);
      } else if (opp.size() == 1 && sides[opp[0]].lo == s.lo && sides[opp[0]].hi == s.hi) {
        Edge& e = get_edge(s);
        e.kind = EdgeKind::Regular;
        attach_owner(e, s);
        attach_owner(e, sides[opp[0]]);
        set.by_side[{s.elem, static_cast<int>(s.side)}] = edge_id(s);
      } else if (opp.size() == 1 && sides[opp[0]].lo <= s.lo && sides[opp[0]].hi >= s.hi) {
        // This side is half of a coarser neighbor side.
        const SideRec& m = sides[opp[0]];
        if (s.lo != m.lo && s.hi != m.hi) {
          report(s.elem, "element side is not an exact half of its master");
          continue;
        }
        if (s.hi - s.lo != 0.5 * (m.hi - m.lo)) {
          report(s.elem, "element side is more than one level finer than its master");
          continue;
        }
        Edge& e = get_edge(s);
        e.kind = EdgeKind::Sub;
        attach_owner(e, s);
        attach_owner(e, m);
        set.by_side[{s.elem, static_cast<int>(s.side)}] = edge_id(s);
      } else if (opp.size() == 2) {
        int a = opp[0], b = opp[1];
        if (sides[a].lo > sides[b].lo) std::swap(a, b);
        const double mid = s.lo + 0.5 * (s.hi - s.lo);
        if (sides[a].lo != s.lo || sides[a].hi != mid || sides[b].lo != mid ||
            sides[b].hi != s.hi) {
          report(s.elem, "side neighbors do not tile the side in exact halves");
          continue;
        }
        Edge& e = get_edge(s);
        e.kind = EdgeKind::Master;
        attach_owner(e, s);
        set.by_side[{s.elem, static_cast<int>(s.side)}] = edge_id(s);
      } else {
        report(s.elem, "side is subdivided more than once by its neighbors");
      }
    }
  }

  // Link masters with their sub edges and assign minimum-rule orders.
  auto dir_order = [&](int elem, int axis) {
    const Orders o = mesh.element(elem).orders;
    return axis == 0 ? o.py : o.px;  // vertical edges vary in y
  };
  for (std::size_t i = 0; i < set.edges.size(); ++i) {
    Edge& e = set.edges[i];
    if (e.kind == EdgeKind::Master) {
      const double mid = e.mid();
      auto lo_it = edge_index.find({e.axis, e.line, e.lo, mid});
      auto hi_it = edge_index.find({e.axis, e.line, mid, e.hi});
      if (lo_it == edge_index.end() || hi_it == edge_index.end()) {
        const int owner = e.elem_plus >= 0 ? e.elem_plus : e.elem_minus;
        report(owner, "master edge lacks sub edges");
        continue;
      }
      e.subs = {lo_it->second, hi_it->second};
      set.edges[lo_it->second].master = static_cast<int>(i);
      set.edges[hi_it->second].master = static_cast<int>(i);
    }
  }
  for (Edge& e : set.edges) {
    switch (e.kind) {
      case EdgeKind::Boundary: {
        const int owner = e.elem_plus >= 0 ? e.elem_plus : e.elem_minus;
        e.order = dir_order(owner, e.axis);
        break;
      }
      case EdgeKind::Regular:
        e.order = std::min(dir_order(e.elem_minus, e.axis), dir_order(e.elem_plus, e.axis));
        break;
      case EdgeKind::Master: {
        const int coarse = e.elem_plus >= 0 ? e.elem_plus : e.elem_minus;
        int o = dir_order(coarse, e.axis);
        for (int sub : e.subs) {
          if (sub < 0) continue;
          const Edge& se = set.edges[sub];
          const int fine = (coarse == se.elem_plus) ? se.elem_minus : se.elem_plus;
          if (fine >= 0) o = std::min(o, dir_order(fine, e.axis));
        }
        e.order = o;
        break;
      }
      case EdgeKind::Sub:
        break;  // assigned below, after all masters are final
    }
  }
  for (Edge& e : set.edges)
    if (e.kind == EdgeKind::Sub && e.master >= 0) e.order = set.edges[e.master].order;
  return set;
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

inline AuditReport Mesh::audit() const {
  AuditReport rep;
  auto add = [&](int id, const std::string& what) { rep.violations.push_back({id, what}); };

  double active_area = 0.0, root_area = 0.0;
  for (const Element& e : elements_) {
    const Rect& b = e.bounds;
    if (!(b.x1 < b.x2 && b.y1 < b.y2)) add(e.id, "degenerate bounds");
    if (!orders_in_range(e.orders)) add(e.id, "orders out of range");
    if (e.active()) active_area += b.area();
    if (e.level < 0) add(e.id, "negative level");
    if (e.parent < 0) {
      root_area += b.area();
    } else {
      const Element& p = elements_[e.parent];
      if (e.level != p.level + 1) add(e.id, "level is not parent level + 1");
      if (e.orders.px < p.orders.px || e.orders.py < p.orders.py)
        add(e.id, "orders decreased from parent");
      bool listed = false;
      for (int c = 0; c < p.child_count; ++c) listed |= p.children[c] == e.id;
      if (!listed) add(e.id, "parent does not list element as child");
    }
    if (e.child_count != 0) {
      // Children must tile the parent exactly.
      double carea = 0.0;
      for (int c = 0; c < e.child_count; ++c) {
        const Element& ch = elements_[e.children[c]];
        carea += ch.bounds.area();
        if (ch.bounds.x1 < b.x1 || ch.bounds.x2 > b.x2 || ch.bounds.y1 < b.y1 ||
            ch.bounds.y2 > b.y2)
          add(e.id, "child extends outside parent");
      }
      if (std::abs(carea - b.area()) > 1e-12) add(e.id, "children do not tile parent");
      if (e.child_count != 2 && e.child_count != 4) add(e.id, "invalid child count");
    }
  }
  if (std::abs(active_area - root_area) > 1e-12)
    add(-1, "active elements do not cover the domain");

  // Edge geometry: 1-irregularity, tiling, boundary conformity. Minimum-rule
  // orders are recomputed definitionally, so a successful classification
  // certifies them.
  classify_edges(*this, &rep.violations);
  return rep;
}

// ---------------------------------------------------------------------------
// Snapshot I/O: one line per active element, "id level x1 y1 x2 y2 px py".
// ---------------------------------------------------------------------------

inline void write_mesh_snapshot(const Mesh& mesh, std::ostream& out) {
  char buf[256];
  for (int id : mesh.active_ids()) {
    const Element& e = mesh.element(id);
    std::snprintf(buf, sizeof(buf), "%d %d %.17g %.17g %.17g %.17g %d %d\n", e.id, e.level,
                  e.bounds.x1, e.bounds.y1, e.bounds.x2, e.bounds.y2, e.orders.px,
                  e.orders.py);
    out << buf;
  }
}

inline void write_mesh_snapshot(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open mesh snapshot for writing: " + path);
  write_mesh_snapshot(mesh, out);
  if (!out) throw std::runtime_error("failed writing mesh snapshot: " + path);
}

inline Mesh read_mesh_snapshot(std::istream& in) {
  Mesh m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int id, level, px, py;
    double x1, y1, x2, y2;
    if (!(ls >> id >> level >> x1 >> y1 >> x2 >> y2 >> px >> py)) {
      throw std::runtime_error("malformed mesh snapshot line " + std::to_string(lineno));
    }
    std::string rest;
    if (ls >> rest)
      throw std::runtime_error("malformed mesh snapshot line " + std::to_string(lineno));
    if (!(x1 < x2 && y1 < y2) || !orders_in_range({px, py}) || level < 0)
      throw std::runtime_error("malformed mesh snapshot line " + std::to_string(lineno));
    Element e;
    e.id = m.size();
    e.level = level;  // restored elements become roots of a fresh forest
    e.parent = -1;
    e.bounds = {x1, y1, x2, y2};
    e.orders = {px, py};
    m.elements_.push_back(e);
    m.roots_.push_back(e.id);
  }
  return m;
}

inline Mesh read_mesh_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mesh snapshot: " + path);
  try {
    return read_mesh_snapshot(in);
  } catch (const std::runtime_error& err) {
    throw std::runtime_error(std::string(err.what()) + " in " + path);
  }
}

}  // namespace hpfem
