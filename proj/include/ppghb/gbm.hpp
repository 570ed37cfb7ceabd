#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppghb/common.hpp"

namespace ppghb {

// ---------------------------------------------------------------------------
// Model structure
// ---------------------------------------------------------------------------

// Nodes live in a flat per-tree array; node 0 is the root. A node is a leaf
// iff left < 0. `cover` is the training-sample count that reached the node and
// is required later for SHAP path weighting.
struct TreeNode {
  int feature_index = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double split_gain = 0.0;
  double value = 0.0;  // leaf output, residual units (g/L)
  double cover = 0.0;

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const TreeNode& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature_index)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  int depth_below(int i = 0) const {
    const TreeNode& n = nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_below(n.left), depth_below(n.right));
  }
};

struct GbmHyperparams {
  std::size_t n_trees = 200;
  double learning_rate = 0.05;
  int max_depth = 3;
  std::size_t min_samples_leaf = 2;
  std::uint64_t seed = 0;
};

struct GbmModel {
  double base_score = 0.0;
  double learning_rate = 0.05;
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  GbmHyperparams hyperparams;

  double predict_row(const std::vector<double>& x) const {
    if (x.size() != feature_names.size())
      throw config_error("feature width mismatch: model expects " +
                         std::to_string(feature_names.size()) + " features, got " +
                         std::to_string(x.size()));
    double f = base_score;
    for (const Tree& t : trees) f += learning_rate * t.predict(x);
    return f;
  }
};

// Diffs a candidate column list against the model's features, naming what is
// missing and what is extra.
inline void validate_feature_names(const GbmModel& model, const std::vector<std::string>& names) {
  std::vector<std::string> missing, extra;
  for (const std::string& f : model.feature_names)
    if (std::find(names.begin(), names.end(), f) == names.end()) missing.push_back(f);
  for (const std::string& f : names)
    if (std::find(model.feature_names.begin(), model.feature_names.end(), f) ==
        model.feature_names.end())
      extra.push_back(f);
  if (missing.empty() && extra.empty()) return;
  std::ostringstream msg;
  msg << "feature mismatch:";
  if (!missing.empty()) {
    msg << " missing [";
    for (std::size_t i = 0; i < missing.size(); ++i) msg << (i ? ", " : "") << missing[i];
    msg << "]";
  }
  if (!extra.empty()) {
    msg << " extra [";
    for (std::size_t i = 0; i < extra.size(); ++i) msg << (i ? ", " : "") << extra[i];
    msg << "]";
  }
  throw config_error(msg.str());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

// Exact greedy search over every feature and every midpoint between adjacent
// distinct sorted values. Gain is the SSE reduction S_L^2/n_L + S_R^2/n_R -
// S_P^2/n_P; only strictly positive gains split. Features and thresholds are
// scanned in ascending order with strict improvement, which realizes the
// lowest-feature-then-lowest-threshold tie-breaking.
inline SplitChoice best_split(const std::vector<std::vector<double>>& X,
                              const std::vector<double>& residual,
                              const std::vector<std::size_t>& samples,
                              std::size_t min_samples_leaf) {
  SplitChoice best;
  const std::size_t n = samples.size();
  if (n < 2 * min_samples_leaf) return best;

  double total = 0.0;
  for (std::size_t s : samples) total += residual[s];
  const double parent_score = total * total / static_cast<double>(n);

  std::vector<std::size_t> order(samples);
  for (std::size_t f = 0; f < X[0].size(); ++f) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return X[a][f] != X[b][f] ? X[a][f] < X[b][f] : a < b;
    });
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      left_sum += residual[order[i]];
      const double v = X[order[i]][f];
      const double next = X[order[i + 1]][f];
      if (v == next) continue;  // not a boundary between distinct values
      const std::size_t n_left = i + 1;
      const std::size_t n_right = n - n_left;
      if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                          right_sum * right_sum / static_cast<double>(n_right) - parent_score;
      if (gain > best.gain) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (v + next);
        best.gain = gain;
      }
    }
  }
  return best;
}

inline int grow_node(Tree& tree, const std::vector<std::vector<double>>& X,
                     const std::vector<double>& residual,
                     const std::vector<std::size_t>& samples, int depth,
                     const GbmHyperparams& hp) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.back().cover = static_cast<double>(samples.size());

  SplitChoice split;
  if (depth < hp.max_depth) split = best_split(X, residual, samples, hp.min_samples_leaf);

  if (!split.found) {
    double sum = 0.0;
    for (std::size_t s : samples) sum += residual[s];
    tree.nodes[static_cast<std::size_t>(index)].value =
        sum / static_cast<double>(samples.size());
    return index;
  }

  std::vector<std::size_t> left, right;
  for (std::size_t s : samples)
    (X[s][split.feature] <= split.threshold ? left : right).push_back(s);

  const int l = grow_node(tree, X, residual, left, depth + 1, hp);
  const int r = grow_node(tree, X, residual, right, depth + 1, hp);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
  node.feature_index = static_cast<int>(split.feature);
  node.threshold = split.threshold;
  node.split_gain = split.gain;
  node.left = l;
  node.right = r;
  return index;
}

}  // namespace detail

struct TrainResult {
  GbmModel model;
  // trace[m] = training RMSE after m trees; trace[0] uses base_score only.
  std::vector<double> train_rmse;
};

inline TrainResult train_gbm(const std::vector<std::vector<double>>& X,
                             const std::vector<double>& y,
                             const std::vector<std::string>& feature_names,
                             const GbmHyperparams& hp = {}) {
  if (X.empty()) throw std::invalid_argument("train_gbm: empty feature matrix");
  if (X.size() != y.size())
    throw std::invalid_argument("train_gbm: X and y length mismatch");
  if (y.size() < 2 * hp.min_samples_leaf)
    throw std::invalid_argument("train_gbm: need at least " +
                                std::to_string(2 * hp.min_samples_leaf) + " samples");
  if (!(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0))
    throw config_error("learning_rate must lie in (0, 1]");
  if (hp.max_depth < 1) throw config_error("max_depth must be >= 1");
  for (const std::vector<double>& row : X) {
    if (row.size() != feature_names.size())
      throw std::invalid_argument("train_gbm: row width does not match feature_names");
    for (double v : row)
      if (!std::isfinite(v))
        throw std::invalid_argument("train_gbm: non-finite feature value (clean the table first)");
  }
  for (double v : y)
    if (!std::isfinite(v)) throw std::invalid_argument("train_gbm: non-finite target");

  TrainResult result;
  GbmModel& model = result.model;
  model.base_score = mean_of(y);
  model.learning_rate = hp.learning_rate;
  model.feature_names = feature_names;
  model.hyperparams = hp;

  const std::size_t n = y.size();
  std::vector<double> score(n, model.base_score);
  std::vector<double> residual(n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});

  const auto rmse_now = [&] {
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) sse += (y[i] - score[i]) * (y[i] - score[i]);
    return std::sqrt(sse / static_cast<double>(n));
  };
  result.train_rmse.push_back(rmse_now());

  for (std::size_t m = 0; m < hp.n_trees; ++m) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - score[i];
    Tree tree;
    detail::grow_node(tree, X, residual, all, 0, hp);
    for (std::size_t i = 0; i < n; ++i) score[i] += hp.learning_rate * tree.predict(X[i]);
    model.trees.push_back(std::move(tree));
    result.train_rmse.push_back(rmse_now());
  }
  return result;
}

inline std::vector<double> predict(const GbmModel& model,
                                   const std::vector<std::vector<double>>& X) {
  std::vector<double> out;
  out.reserve(X.size());
  for (const std::vector<double>& row : X) out.push_back(model.predict_row(row));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;  // absent when the reference has zero variance
  std::size_t n = 0;
};

inline RegressionMetrics evaluate(const std::vector<double>& y_pred,
                                  const std::vector<double>& y_true) {
  if (y_pred.size() != y_true.size())
    throw std::invalid_argument("evaluate: length mismatch");
  if (y_true.size() < 2) throw std::invalid_argument("evaluate: need at least 2 pairs");

  RegressionMetrics m;
  m.n = y_true.size();
  const double n = static_cast<double>(m.n);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double d = y_pred[i] - y_true[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);

  const double y_bar = mean_of(y_true);
  double ss_tot = 0.0;
  for (double v : y_true) ss_tot += (v - y_bar) * (v - y_bar);
  if (ss_tot > 0.0) m.r2 = 1.0 - sq_sum / ss_tot;
  return m;
}

// Total split gain per feature; features the ensemble never used map to 0.
inline std::map<std::string, double> gain_importance(const GbmModel& model) {
  std::map<std::string, double> gains;
  for (const std::string& f : model.feature_names) gains[f] = 0.0;
  for (const Tree& t : model.trees)
    for (const TreeNode& n : t.nodes)
      if (!n.is_leaf())
        gains[model.feature_names[static_cast<std::size_t>(n.feature_index)]] += n.split_gain;
  return gains;
}

// ---------------------------------------------------------------------------
// Persistence (versioned JSON)
// ---------------------------------------------------------------------------

inline constexpr const char* gbm_format_version = "ppghb-gbm-1";

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, int index) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(index)];
  nlohmann::json j;
  j["cover"] = n.cover;
  if (n.is_leaf()) {
    j["value"] = n.value;
  } else {
    j["feature_index"] = n.feature_index;
    j["threshold"] = n.threshold;
    j["gain"] = n.split_gain;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

inline int node_from_json(const nlohmann::json& j, Tree& tree, std::size_t n_features) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.back().cover = j.at("cover").get<double>();
  if (j.contains("value")) {
    tree.nodes[static_cast<std::size_t>(index)].value = j.at("value").get<double>();
    return index;
  }
  const int f = j.at("feature_index").get<int>();
  if (f < 0 || static_cast<std::size_t>(f) >= n_features)
    throw format_error("model file: feature_index " + std::to_string(f) + " out of range");
  const double threshold = j.at("threshold").get<double>();
  const double gain = j.at("gain").get<double>();
  const int l = node_from_json(j.at("left"), tree, n_features);
  const int r = node_from_json(j.at("right"), tree, n_features);
  TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
  node.feature_index = f;
  node.threshold = threshold;
  node.split_gain = gain;
  node.left = l;
  node.right = r;
  return index;
}

}  // namespace detail

inline nlohmann::json model_to_json(const GbmModel& model) {
  nlohmann::json j;
  j["version"] = gbm_format_version;
  j["base_score"] = model.base_score;
  j["learning_rate"] = model.learning_rate;
  j["feature_names"] = model.feature_names;
  j["hyperparams"] = {{"n_trees", model.hyperparams.n_trees},
                      {"learning_rate", model.hyperparams.learning_rate},
                      {"max_depth", model.hyperparams.max_depth},
                      {"min_samples_leaf", model.hyperparams.min_samples_leaf},
                      {"seed", model.hyperparams.seed}};
  j["trees"] = nlohmann::json::array();
  for (const Tree& t : model.trees) j["trees"].push_back(detail::node_to_json(t, 0));
  return j;
}

inline GbmModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version"))
    throw format_error("model file: missing version field (expected " +
                       std::string(gbm_format_version) + ")");
  if (j.at("version").get<std::string>() != gbm_format_version)
    throw format_error("model file: unknown format version '" +
                       j.at("version").get<std::string>() + "' (expected " +
                       std::string(gbm_format_version) + ")");
  GbmModel model;
  model.base_score = j.at("base_score").get<double>();
  model.learning_rate = j.at("learning_rate").get<double>();
  model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const nlohmann::json& hp = j.at("hyperparams");
  model.hyperparams.n_trees = hp.at("n_trees").get<std::size_t>();
  model.hyperparams.learning_rate = hp.at("learning_rate").get<double>();
  model.hyperparams.max_depth = hp.at("max_depth").get<int>();
  model.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<std::size_t>();
  model.hyperparams.seed = hp.at("seed").get<std::uint64_t>();
  for (const nlohmann::json& tj : j.at("trees")) {
    Tree t;
    detail::node_from_json(tj, t, model.feature_names.size());
    model.trees.push_back(std::move(t));
  }
  return model;
}

inline void save_model(const GbmModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open model file for writing: " + path);
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw io_error("failed writing model file: " + path);
}

inline GbmModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open model file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw format_error("model file parse error in " + path + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("model file " + path + " is malformed: " + e.what());
  }
}

}  // namespace ppghb
