#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ppghb/common.hpp"
#include "ppghb/gbm.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Shapley attributions for the tree ensemble
// ---------------------------------------------------------------------------
//
// Value function: the tree-path-conditional expectation. A feature subset S
// fixes the branch at splits on features in S; at splits on other features the
// flow divides between children proportionally to their training covers.
// tree_shap computes exact Shapley values of that game in polynomial time by
// carrying subset-size-aggregated weights along each root-to-leaf path.

struct ShapExplanation {
  double base_value = 0.0;   // expected model output with nothing known
  std::vector<double> phi;   // aligned with the model's feature_names
  double prediction = 0.0;
};

namespace detail {

// Path element for one unique feature encountered on the way down. `zero` is
// the flow fraction if the feature is excluded, `one` the indicator (0/1) that
// x's value passes the split(s) when included. pweight[k] aggregates, over all
// k-subsets S of path features, k!(D-k)!/(D+1)! * prod(one in S) *
// prod(zero outside S); the algebra below maintains that invariant.
struct PathElement {
  int feature = -1;
  double zero = 1.0;
  double one = 1.0;
  double pweight = 0.0;
};

inline void extend_path(std::vector<PathElement>& m, double pz, double po, int pf) {
  const std::size_t l = m.size();
  m.push_back({pf, pz, po, l == 0 ? 1.0 : 0.0});
  for (std::size_t i = l; i-- > 0;) {
    m[i + 1].pweight +=
        po * m[i].pweight * static_cast<double>(i + 1) / static_cast<double>(l + 1);
    m[i].pweight *= pz * static_cast<double>(l - i) / static_cast<double>(l + 1);
  }
}

// Removes element `index`, restoring the pweights of the shorter path.
inline void unwind_path(std::vector<PathElement>& m, std::size_t index) {
  const std::size_t d = m.size() - 1;
  const double o = m[index].one;
  const double z = m[index].zero;
  double next = m[d].pweight;
  for (std::size_t i = d; i-- > 0;) {
    if (o != 0.0) {
      const double tmp = m[i].pweight;
      m[i].pweight = next * static_cast<double>(d + 1) / (static_cast<double>(i + 1) * o);
      next = tmp - m[i].pweight * z * static_cast<double>(d - i) / static_cast<double>(d + 1);
    } else {
      m[i].pweight *= static_cast<double>(d + 1) / (z * static_cast<double>(d - i));
    }
  }
  for (std::size_t i = index; i < d; ++i) {
    m[i].feature = m[i + 1].feature;
    m[i].zero = m[i + 1].zero;
    m[i].one = m[i + 1].one;
  }
  m.pop_back();
}

// Sum of the pweights UNWIND would leave behind, without mutating the path.
inline double unwound_path_sum(const std::vector<PathElement>& m, std::size_t index) {
  const std::size_t d = m.size() - 1;
  const double o = m[index].one;
  const double z = m[index].zero;
  double next = m[d].pweight;
  double total = 0.0;
  for (std::size_t i = d; i-- > 0;) {
    if (o != 0.0) {
      const double tmp = next * static_cast<double>(d + 1) / (static_cast<double>(i + 1) * o);
      total += tmp;
      next = m[i].pweight - tmp * z * static_cast<double>(d - i) / static_cast<double>(d + 1);
    } else {
      total += m[i].pweight * static_cast<double>(d + 1) / (z * static_cast<double>(d - i));
    }
  }
  return total;
}

inline void shap_recurse(const Tree& tree, int node_index, const std::vector<double>& x,
                         std::vector<PathElement> m, double pz, double po, int pf,
                         std::vector<double>& phi) {
  extend_path(m, pz, po, pf);
  const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];

  if (node.is_leaf()) {
    for (std::size_t i = 1; i < m.size(); ++i)
      phi[static_cast<std::size_t>(m[i].feature)] +=
          unwound_path_sum(m, i) * (m[i].one - m[i].zero) * node.value;
    return;
  }

  const bool go_left = x[static_cast<std::size_t>(node.feature_index)] <= node.threshold;
  const int hot = go_left ? node.left : node.right;
  const int cold = go_left ? node.right : node.left;
  const double hot_frac = tree.nodes[static_cast<std::size_t>(hot)].cover / node.cover;
  const double cold_frac = tree.nodes[static_cast<std::size_t>(cold)].cover / node.cover;

  // A feature met again deeper on the path: undo its element and fold its
  // fractions into the child calls.
  double iz = 1.0, io = 1.0;
  std::size_t found = 0;
  for (std::size_t i = 1; i < m.size(); ++i)
    if (m[i].feature == node.feature_index) {
      found = i;
      break;
    }
  if (found > 0) {
    iz = m[found].zero;
    io = m[found].one;
    unwind_path(m, found);
  }

  shap_recurse(tree, hot, x, m, iz * hot_frac, io, node.feature_index, phi);
  shap_recurse(tree, cold, x, m, iz * cold_frac, 0.0, node.feature_index, phi);
}

inline double expected_value(const Tree& tree, int index = 0) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(index)];
  if (n.is_leaf()) return n.value;
  return (tree.nodes[static_cast<std::size_t>(n.left)].cover * expected_value(tree, n.left) +
          tree.nodes[static_cast<std::size_t>(n.right)].cover * expected_value(tree, n.right)) /
         n.cover;
}

inline void require_covers(const GbmModel& model) {
  for (const Tree& t : model.trees)
    for (const TreeNode& n : t.nodes)
      if (!(n.cover > 0.0)) throw std::runtime_error("model lacks cover data");
}

}  // namespace detail

inline ShapExplanation tree_shap(const GbmModel& model, const std::vector<double>& x) {
  if (x.size() != model.feature_names.size())
    throw config_error("feature width mismatch: model expects " +
                       std::to_string(model.feature_names.size()) + " features, got " +
                       std::to_string(x.size()));
  detail::require_covers(model);

  ShapExplanation out;
  out.phi.assign(model.feature_names.size(), 0.0);
  out.base_value = model.base_score;
  std::vector<double> tree_phi(out.phi.size());
  for (const Tree& t : model.trees) {
    std::fill(tree_phi.begin(), tree_phi.end(), 0.0);
    detail::shap_recurse(t, 0, x, {}, 1.0, 1.0, -1, tree_phi);
    for (std::size_t i = 0; i < tree_phi.size(); ++i)
      out.phi[i] += model.learning_rate * tree_phi[i];
    out.base_value += model.learning_rate * detail::expected_value(t);
  }
  out.prediction = model.predict_row(x);
  return out;
}

// ---------------------------------------------------------------------------
// Aggregated and plot-ready views
// ---------------------------------------------------------------------------

struct ImportanceEntry {
  std::string feature;
  double mean_abs_phi = 0.0;
};

// Mean |phi| per feature over the rows of X, sorted by (value desc, name asc).
inline std::vector<ImportanceEntry> global_importance(const GbmModel& model,
                                                      const std::vector<std::vector<double>>& X) {
  if (X.empty()) throw std::invalid_argument("global_importance: empty matrix");
  std::vector<double> acc(model.feature_names.size(), 0.0);
  for (const std::vector<double>& row : X) {
    const ShapExplanation e = tree_shap(model, row);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::abs(e.phi[i]);
  }
  std::vector<ImportanceEntry> out;
  for (std::size_t i = 0; i < acc.size(); ++i)
    out.push_back({model.feature_names[i], acc[i] / static_cast<double>(X.size())});
  std::sort(out.begin(), out.end(), [](const ImportanceEntry& a, const ImportanceEntry& b) {
    return a.mean_abs_phi != b.mean_abs_phi ? a.mean_abs_phi > b.mean_abs_phi
                                            : a.feature < b.feature;
  });
  return out;
}

struct WaterfallStep {
  std::string name;
  double phi = 0.0;         // 0 on the base row
  double cumulative = 0.0;  // running total, starting at base_value
};

// Base row first, then the nonzero contributions sorted by |phi| descending
// (ties by name ascending); the last cumulative equals the prediction.
inline std::vector<WaterfallStep> waterfall_data(const ShapExplanation& e,
                                                 const std::vector<std::string>& feature_names) {
  if (e.phi.size() != feature_names.size())
    throw std::invalid_argument("waterfall_data: name count does not match phi width");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < e.phi.size(); ++i)
    if (e.phi[i] != 0.0) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double pa = std::abs(e.phi[a]), pb = std::abs(e.phi[b]);
    return pa != pb ? pa > pb : feature_names[a] < feature_names[b];
  });

  std::vector<WaterfallStep> steps;
  steps.push_back({"base_value", 0.0, e.base_value});
  double running = e.base_value;
  for (std::size_t i : order) {
    running += e.phi[i];
    steps.push_back({feature_names[i], e.phi[i], running});
  }
  return steps;
}

struct DependencePoint {
  double value = 0.0;  // the feature's value in that row
  double phi = 0.0;
};

// One (value, phi) pair per row of X for the named feature, sorted ascending
// by value with ties keeping row order.
inline std::vector<DependencePoint> dependence_data(const GbmModel& model,
                                                    const std::vector<std::vector<double>>& X,
                                                    const std::string& feature) {
  const auto it = std::find(model.feature_names.begin(), model.feature_names.end(), feature);
  if (it == model.feature_names.end()) throw config_error("unknown feature: " + feature);
  const std::size_t f = static_cast<std::size_t>(it - model.feature_names.begin());

  std::vector<DependencePoint> points;
  points.reserve(X.size());
  for (const std::vector<double>& row : X)
    points.push_back({row[f], tree_shap(model, row).phi[f]});
  std::stable_sort(points.begin(), points.end(),
                   [](const DependencePoint& a, const DependencePoint& b) {
                     return a.value < b.value;
                   });
  return points;
}

}  // namespace ppghb
