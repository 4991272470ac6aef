#pragma once

#include <cstdint>
#include <vector>

#include "autotune/objective.hpp"
#include "autotune/warmstart.hpp"

namespace autotune {

/// Budget and stopping shared by every population or sampling baseline.
struct SearchConfig {
  std::size_t budget = 200;
  StopRule stop;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct RandomSearchConfig {
  double std = 5.0;  // per-axis std of the uniform draw
  double half_width() const;
};

struct PsoConfig {
  std::size_t particles = 10;
  double inertia = 0.5;
  double cognitive = 1.0;
  double social = 2.0;
  double init_sigma = 5.0;
  double velocity_clamp = 0.5;  // fraction of the box width, bounded axes only
};

struct CmaEsConfig {
  double sigma0 = 5.0;
  std::size_t lambda = 0;  // 0 selects the default population size
  double eigen_floor = 1e-12;
};

/// 4 + floor(3 ln n).
std::size_t cma_default_lambda(std::size_t n);

/// Independent uniform draws in [x0 - d, x0 + d] per axis, d = std * sqrt(3).
SearchResult random_search(const VectorProblem& problem, const std::vector<double>& x0,
                           const SearchConfig& cfg, const RandomSearchConfig& rs = {});

/// Global-best particle swarm started from Gaussian(x0, init_sigma).
SearchResult pso(const VectorProblem& problem, const std::vector<double>& x0,
                 const SearchConfig& cfg, const PsoConfig& pc = {});

/// (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation.
SearchResult cma_es(const VectorProblem& problem, const std::vector<double>& x0,
                    const SearchConfig& cfg, const CmaEsConfig& cc = {});

struct RegressorOnlyResult {
  InitPrediction prediction;
  std::vector<Evaluation> evaluations;
  double mean_completion = 0.0;
  bool all_passed = false;
};

/// Warm-start prediction scored on `n_seeds` rollouts, without any search.
RegressorOnlyResult regressor_only(const WarmStartModel& model, const ReferenceTrajectory& ref,
                                   const SegmentPlan& plan, const Objective& objective,
                                   std::uint64_t seed, int horizon_max = 40,
                                   std::size_t n_seeds = 4, std::size_t jobs = 1);

/// Synthetic problems with score = -f(x) and no stop rule, for checking the
/// optimizers in isolation.
VectorProblem sphere_problem(const std::vector<double>& optimum);
VectorProblem rosenbrock_problem(std::size_t n);

}  // namespace autotune
