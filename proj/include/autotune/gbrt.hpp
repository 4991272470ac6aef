#pragma once

#include <vector>

#include "json.hpp"

namespace autotune {

struct GbrtConfig {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_samples_leaf = 1;
};

/// Array-backed regression tree. Leaves have feature == -1.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const std::vector<double>& x) const;
};

/// Least-squares gradient boosting.
class GradientBoosting {
 public:
  GradientBoosting() = default;

  /// Rows of X must share one width. Needs at least one row.
  static GradientBoosting fit(const std::vector<std::vector<double>>& X,
                              const std::vector<double>& y, const GbrtConfig& cfg = {});

  double predict(const std::vector<double>& x) const;
  /// Prediction using only the first `n` trees.
  double predict_staged(const std::vector<double>& x, std::size_t n) const;

  double init() const { return init_; }
  std::size_t n_trees() const { return trees_.size(); }
  std::size_t n_features() const { return n_features_; }
  const GbrtConfig& config() const { return cfg_; }

  nlohmann::json to_json() const;
  static GradientBoosting from_json(const nlohmann::json& j);

 private:
  GbrtConfig cfg_;
  double init_ = 0.0;
  std::size_t n_features_ = 0;
  std::vector<RegressionTree> trees_;
};

double rmse(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace autotune
