#pragma once

// Pyramid layouts: which quantile level is pinned down in which subinterval,
// at which depth. A node is a subinterval that receives at least one interior
// quantile; its address is the epsilon-sequence of subinterval choices leading
// to it (root has the empty address). Gap j below a node with K interiors is
// addressed by appending j (0..K); interior quantile k carries the node
// address with k appended.

#include <algorithm>
#include <cstddef>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/levels.hpp"

namespace dqp {

struct NodeAddress {
  std::vector<int> eps;

  int level() const { return static_cast<int>(eps.size()); }

  std::string str() const {
    if (eps.empty()) return "root";
    std::string s;
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (i) s += '.';
      s += std::to_string(eps[i]);
    }
    return s;
  }
};

struct LayoutNode {
  NodeAddress addr;            // subinterval address (length = level-1)
  double tau_left = 0.0;       // endpoint quantile levels tau_{eps 0}, tau_{eps (K+1)}
  double tau_right = 1.0;
  std::vector<double> interior;       // K levels assigned here, strictly increasing
  std::vector<int> interior_index;    // indices into QuantileLevels
  std::vector<int> children;          // K+1 gap slots, node index or -1
  int parent = -1;

  int level() const { return addr.level() + 1; }  // level at which interiors are specified
  int interior_count() const { return static_cast<int>(interior.size()); }
};

// One entry per specified quantile level: where it lives in the tree.
struct LevelPlacement {
  int node = -1;  // index into PyramidLayout::nodes
  int k = 0;      // 1-based position within the node (epsilon_m)
};

// User split specification for general (non-binary) pyramids. `take` lists
// 1-based positions among the node's own candidate levels; `children` gives
// one spec per gap (may be omitted when every remaining gap is empty).
struct SplitSpec {
  std::vector<int> take;
  std::vector<SplitSpec> children;
};

class PyramidLayout {
 public:
  PyramidLayout(QuantileLevels levels, std::vector<LayoutNode> nodes)
      : levels_(std::move(levels)), nodes_(std::move(nodes)) {
    finalize();
  }

  const QuantileLevels& levels() const { return levels_; }
  const std::vector<LayoutNode>& nodes() const { return nodes_; }
  const LayoutNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  int depth() const { return depth_; }
  std::size_t level_count() const { return levels_.size(); }

  const LevelPlacement& placement(int t) const { return placement_[static_cast<std::size_t>(t)]; }

  // Specified-level indices in top-down sweep order: by pyramid level, then
  // node position left to right, then within-node position.
  const std::vector<int>& pyramid_order() const { return pyramid_order_; }

  bool is_binary() const {
    return std::all_of(nodes_.begin(), nodes_.end(),
                       [](const LayoutNode& n) { return n.interior_count() == 1; });
  }

  // Index of the specified level equal to tau, or -1 for the anchors 0/1.
  int level_index(double tau) const {
    if (tau == 0.0 || tau == 1.0) return -1;
    const auto& v = levels_.values();
    auto it = std::lower_bound(v.begin(), v.end(), tau);
    if (it == v.end() || *it != tau) throw invalid_argument("level_index: tau is not a specified level");
    return static_cast<int>(it - v.begin());
  }

  // Finest subintervals (gaps with no child node), as (tau_left, tau_right) pairs.
  std::vector<std::pair<double, double>> leaf_intervals() const {
    std::vector<std::pair<double, double>> out;
    for (const auto& n : nodes_) {
      for (std::size_t j = 0; j < n.children.size(); ++j) {
        if (n.children[j] >= 0) continue;
        double lo = (j == 0) ? n.tau_left : n.interior[j - 1];
        double hi = (j == n.interior.size()) ? n.tau_right : n.interior[j];
        out.emplace_back(lo, hi);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Structured text form, one line per node: "<path>: (tauL, tauR) -> taus".
  std::string serialize() const {
    std::ostringstream os;
    os.precision(12);
    for (const auto& n : nodes_) {
      os << n.addr.str() << ": (" << n.tau_left << ", " << n.tau_right << ") ->";
      for (double tau : n.interior) os << ' ' << tau;
      os << '\n';
    }
    return os.str();
  }

 private:
  void finalize() {
    depth_ = 0;
    placement_.assign(levels_.size(), LevelPlacement{});
    std::vector<int> seen(levels_.size(), 0);
    for (std::size_t ni = 0; ni < nodes_.size(); ++ni) {
      const auto& n = nodes_[ni];
      depth_ = std::max(depth_, n.level());
      if (n.interior.empty()) throw invalid_argument("PyramidLayout: node without interior levels");
      if (n.children.size() != n.interior.size() + 1)
        throw invalid_argument("PyramidLayout: child slot count mismatch at " + n.addr.str());
      double prev = n.tau_left;
      for (std::size_t k = 0; k < n.interior.size(); ++k) {
        double tau = n.interior[k];
        if (!(tau > prev && tau < n.tau_right))
          throw invalid_argument("PyramidLayout: interior level outside endpoint range at " +
                                 n.addr.str());
        prev = tau;
        int t = n.interior_index[k];
        if (seen[static_cast<std::size_t>(t)]++)
          throw invalid_argument("PyramidLayout: level assigned twice");
        placement_[static_cast<std::size_t>(t)] = {static_cast<int>(ni), static_cast<int>(k) + 1};
      }
    }
    for (std::size_t t = 0; t < levels_.size(); ++t)
      if (!seen[t]) throw invalid_argument("PyramidLayout: level never assigned");

    pyramid_order_.clear();
    for (const auto& n : nodes_)  // nodes are stored in BFS order
      for (int t : n.interior_index) pyramid_order_.push_back(t);
  }

  QuantileLevels levels_;
  std::vector<LayoutNode> nodes_;
  std::vector<LevelPlacement> placement_;
  std::vector<int> pyramid_order_;
  int depth_ = 0;
};

// Scaled levels gamma_k = (tau_k - tauL) / (tauR - tauL) for a node's interiors.
inline std::vector<double> scaled_levels(const LayoutNode& node) {
  if (node.interior.empty()) throw invalid_argument("scaled_levels: node has no interior levels");
  double width = node.tau_right - node.tau_left;
  if (!(width > 0.0)) throw invalid_argument("scaled_levels: zero-width endpoint interval");
  std::vector<double> g;
  g.reserve(node.interior.size());
  for (double tau : node.interior) g.push_back((tau - node.tau_left) / width);
  return g;
}

namespace detail {

struct PendingNode {
  int parent;       // parent node index, -1 for root
  int gap;          // gap slot within parent
  NodeAddress addr;
  double tau_left, tau_right;
  int lo, hi;       // candidate level index range [lo, hi)
  const SplitSpec* spec;  // null for oblique construction
};

// Breadth-first build shared by the oblique and general constructions.
inline std::vector<LayoutNode> build_nodes(const QuantileLevels& levels, const SplitSpec* root_spec) {
  std::vector<LayoutNode> nodes;
  std::queue<PendingNode> queue;
  queue.push({-1, 0, NodeAddress{}, 0.0, 1.0, 0, static_cast<int>(levels.size()), root_spec});
  while (!queue.empty()) {
    PendingNode p = queue.front();
    queue.pop();
    int count = p.hi - p.lo;
    if (count <= 0) continue;

    LayoutNode n;
    n.addr = p.addr;
    n.tau_left = p.tau_left;
    n.tau_right = p.tau_right;
    n.parent = p.parent;

    std::vector<int> picks;  // candidate offsets chosen at this node
    std::vector<const SplitSpec*> child_specs;
    if (p.spec == nullptr) {
      // Oblique rule: the middle candidate, taking the smaller of the two
      // central ones when the count is even.
      picks.push_back((count - 1) / 2);
    } else {
      const SplitSpec& s = *p.spec;
      if (s.take.empty())
        throw invalid_argument("build_general_layout: node " + p.addr.str() +
                               " has candidates but takes none");
      int prev = 0;
      for (int pos : s.take) {
        if (pos < 1 || pos > count)
          throw invalid_argument("build_general_layout: position " + std::to_string(pos) +
                                 " outside candidate range at node " + p.addr.str());
        if (pos <= prev)
          throw invalid_argument("build_general_layout: positions must increase at node " +
                                 p.addr.str());
        picks.push_back(pos - 1);
        prev = pos;
      }
      if (!s.children.empty() && s.children.size() != s.take.size() + 1)
        throw invalid_argument("build_general_layout: expected " +
                               std::to_string(s.take.size() + 1) + " child specs at node " +
                               p.addr.str());
      child_specs.resize(picks.size() + 1, nullptr);
      for (std::size_t j = 0; j < s.children.size(); ++j) child_specs[j] = &s.children[j];
    }

    for (int off : picks) {
      int t = p.lo + off;
      n.interior.push_back(levels[static_cast<std::size_t>(t)]);
      n.interior_index.push_back(t);
    }
    n.children.assign(picks.size() + 1, -1);
    int node_index = static_cast<int>(nodes.size());
    if (p.parent >= 0) nodes[static_cast<std::size_t>(p.parent)].children[static_cast<std::size_t>(p.gap)] = node_index;
    nodes.push_back(n);

    // Enqueue the K+1 gaps.
    int K = static_cast<int>(picks.size());
    for (int j = 0; j <= K; ++j) {
      int glo = (j == 0) ? p.lo : p.lo + picks[static_cast<std::size_t>(j - 1)] + 1;
      int ghi = (j == K) ? p.hi : p.lo + picks[static_cast<std::size_t>(j)];
      double lo_tau = (j == 0) ? n.tau_left : n.interior[static_cast<std::size_t>(j - 1)];
      double hi_tau = (j == K) ? n.tau_right : n.interior[static_cast<std::size_t>(j)];
      const SplitSpec* cs = child_specs.empty() ? nullptr : child_specs[static_cast<std::size_t>(j)];
      if (p.spec != nullptr && ghi > glo && cs == nullptr)
        throw invalid_argument("build_general_layout: gap " + std::to_string(j) + " of node " +
                               p.addr.str() + " leaves levels unassigned");
      if (ghi <= glo && cs != nullptr && !cs->take.empty())
        throw invalid_argument("build_general_layout: gap " + std::to_string(j) + " of node " +
                               p.addr.str() + " has no candidate levels");
      if (ghi > glo) {
        NodeAddress child_addr = p.addr;
        child_addr.eps.push_back(j);
        queue.push({node_index, j, std::move(child_addr), lo_tau, hi_tau, glo, ghi, cs});
      }
    }
  }
  return nodes;
}

}  // namespace detail

// Binary layout by the oblique construction rule: recursively place the
// middle candidate of each subinterval, preferring the smaller of the two
// central candidates when the count is even.
inline PyramidLayout build_oblique_layout(const QuantileLevels& levels) {
  return PyramidLayout(levels, detail::build_nodes(levels, nullptr));
}

// Layout driven by an explicit per-node split specification.
inline PyramidLayout build_general_layout(const QuantileLevels& levels, const SplitSpec& spec) {
  return PyramidLayout(levels, detail::build_nodes(levels, &spec));
}

}  // namespace dqp
