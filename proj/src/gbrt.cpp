#include "autotune/gbrt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace autotune {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// Exhaustive best split by squared-error reduction. Thresholds sit at
// midpoints between distinct sorted values.
Split best_split(const std::vector<std::vector<double>>& X, const std::vector<double>& r,
                 const std::vector<std::size_t>& idx, std::size_t min_leaf) {
  Split best;
  const std::size_t n = idx.size();
  if (n < 2 * min_leaf) return best;
  double total = 0.0;
  for (std::size_t i : idx) total += r[i];
  const double base = total * total / static_cast<double>(n);

  std::vector<std::size_t> order(idx);
  const std::size_t n_features = X[idx[0]].size();
  for (std::size_t f = 0; f < n_features; ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return X[a][f] < X[b][f]; });
    double left_sum = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      left_sum += r[order[k]];
      const double xa = X[order[k]][f];
      const double xb = X[order[k + 1]][f];
      if (!(xb > xa)) continue;
      const std::size_t nl = k + 1;
      const std::size_t nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double right_sum = total - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(nl) +
                          right_sum * right_sum / static_cast<double>(nr) - base;
      if (gain > best.gain + 1e-12) {
        best.feature = static_cast<int>(f);
        best.threshold = 0.5 * (xa + xb);
        best.gain = gain;
      }
    }
  }
  return best;
}

int grow(RegressionTree& tree, const std::vector<std::vector<double>>& X,
         const std::vector<double>& r, const std::vector<std::size_t>& idx, int depth,
         const GbrtConfig& cfg) {
  double mean = 0.0;
  for (std::size_t i : idx) mean += r[i];
  mean /= static_cast<double>(idx.size());

  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  tree.nodes[id].value = mean;
  if (depth >= cfg.max_depth) return id;

  const Split s = best_split(X, r, idx, std::max<std::size_t>(1, cfg.min_samples_leaf));
  if (s.feature < 0) return id;

  std::vector<std::size_t> left, right;
  for (std::size_t i : idx) (X[i][s.feature] <= s.threshold ? left : right).push_back(i);
  const int l = grow(tree, X, r, left, depth + 1, cfg);
  const int rr = grow(tree, X, r, right, depth + 1, cfg);
  tree.nodes[id].feature = s.feature;
  tree.nodes[id].threshold = s.threshold;
  tree.nodes[id].left = l;
  tree.nodes[id].right = rr;
  return id;
}

}  // namespace

double RegressionTree::predict(const std::vector<double>& x) const {
  int n = 0;
  while (nodes[n].feature >= 0) {
    n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
  }
  return nodes[n].value;
}

GradientBoosting GradientBoosting::fit(const std::vector<std::vector<double>>& X,
                                       const std::vector<double>& y, const GbrtConfig& cfg) {
  if (X.empty() || X.size() != y.size()) throw std::invalid_argument("gbrt: need matching, non-empty X and y");
  if (cfg.n_trees < 0 || cfg.max_depth < 0 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("gbrt: invalid config");
  }
  const std::size_t width = X[0].size();
  for (const auto& row : X) {
    if (row.size() != width) throw std::invalid_argument("gbrt: ragged feature rows");
  }

  GradientBoosting m;
  m.cfg_ = cfg;
  m.n_features_ = width;
  m.init_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<double> pred(y.size(), m.init_);
  std::vector<double> resid(y.size());
  std::vector<std::size_t> all(y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (int t = 0; t < cfg.n_trees; ++t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      resid[i] = y[i] - pred[i];
      sq += resid[i] * resid[i];
    }
    if (sq == 0.0) break;
    RegressionTree tree;
    grow(tree, X, resid, all, 0, cfg);
    if (tree.nodes.size() == 1 && std::abs(tree.nodes[0].value) < 1e-15) break;
    for (std::size_t i = 0; i < y.size(); ++i) pred[i] += cfg.learning_rate * tree.predict(X[i]);
    m.trees_.push_back(std::move(tree));
  }
  return m;
}

double GradientBoosting::predict(const std::vector<double>& x) const {
  return predict_staged(x, trees_.size());
}

double GradientBoosting::predict_staged(const std::vector<double>& x, std::size_t n) const {
  if (x.size() != n_features_) throw std::invalid_argument("gbrt: feature width mismatch");
  double v = init_;
  n = std::min(n, trees_.size());
  for (std::size_t t = 0; t < n; ++t) v += cfg_.learning_rate * trees_[t].predict(x);
  return v;
}

nlohmann::json GradientBoosting::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    }
    trees.push_back(std::move(nodes));
  }
  return {{"n_trees", cfg_.n_trees},
          {"max_depth", cfg_.max_depth},
          {"learning_rate", cfg_.learning_rate},
          {"min_samples_leaf", cfg_.min_samples_leaf},
          {"n_features", n_features_},
          {"init", init_},
          {"trees", std::move(trees)}};
}

GradientBoosting GradientBoosting::from_json(const nlohmann::json& j) {
  GradientBoosting m;
  m.cfg_.n_trees = j.at("n_trees").get<int>();
  m.cfg_.max_depth = j.at("max_depth").get<int>();
  m.cfg_.learning_rate = j.at("learning_rate").get<double>();
  m.cfg_.min_samples_leaf = j.value("min_samples_leaf", std::size_t{1});
  m.n_features_ = j.at("n_features").get<std::size_t>();
  m.init_ = j.at("init").get<double>();
  for (const auto& jt : j.at("trees")) {
    RegressionTree t;
    for (const auto& jn : jt) {
      RegressionTree::Node n;
      n.feature = jn.at(0).get<int>();
      n.threshold = jn.at(1).get<double>();
      n.left = jn.at(2).get<int>();
      n.right = jn.at(3).get<int>();
      n.value = jn.at(4).get<double>();
      t.nodes.push_back(n);
    }
    const int size = static_cast<int>(t.nodes.size());
    for (const auto& n : t.nodes) {
      if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size ||
                             n.feature >= static_cast<int>(m.n_features_))) {
        throw std::runtime_error("gbrt: malformed tree in model file");
      }
    }
    if (t.nodes.empty()) throw std::runtime_error("gbrt: empty tree in model file");
    m.trees_.push_back(std::move(t));
  }
  return m;
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace autotune
