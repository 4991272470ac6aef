#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "autotune/evaluation.hpp"
#include "autotune/mpc.hpp"

namespace autotune {

/// What every optimizer sees of one evaluation.
struct Evaluation {
  double score = 0.0;
  double completion = 0.0;
  double penalized_time = 0.0;
  std::uint64_t seed = 0;
};

/// Black-box objective over parameter vectors. Implementations must be safe
/// to call concurrently.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual Evaluation evaluate(const ParamVector& w, std::uint64_t seed) const = 0;
};

/// Closed-loop rollout on a fixed reference and plan.
class RolloutObjective final : public Objective {
 public:
  RolloutObjective(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                   EvaluationConfig cfg)
      : ref_(ref), plan_(plan), cfg_(std::move(cfg)) {}

  Evaluation evaluate(const ParamVector& w, std::uint64_t seed) const override;
  EvaluationOutcome outcome(const ParamVector& w, std::uint64_t seed) const;

  const SegmentPlan& plan() const { return plan_; }
  const EvaluationConfig& config() const { return cfg_; }

 private:
  const ReferenceTrajectory& ref_;
  const SegmentPlan& plan_;
  EvaluationConfig cfg_;
};

/// Flat real-vector view used by the population optimizers.
struct VectorProblem {
  std::size_t dimension = 0;
  std::function<std::vector<double>(const std::vector<double>&)> project;
  std::function<Evaluation(const std::vector<double>&, std::uint64_t)> evaluate;
  // Per-dimension box for velocity limits; infinite entries mean unbounded.
  std::vector<double> lower;
  std::vector<double> upper;
};

VectorProblem param_problem(const Objective& objective, std::size_t n_segments,
                            int horizon_max);

/// Stop-on-target rule shared by the tuner and the baselines.
struct StopRule {
  bool enabled = true;
  double target_completion = 100.0;
  int reeval_count = 4;
  bool require_all = true;  // otherwise a strict majority suffices
  std::vector<std::uint64_t> reeval_seeds;  // derived from the run seed when empty
};

struct SearchRecord {
  std::size_t iter = 0;
  bool accepted = false;
  bool reeval = false;
  int active_segment = -1;
  double score = 0.0;
  double completion = 0.0;
  double penalized_time = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> params;
};

struct SearchResult {
  std::vector<double> best;
  Evaluation best_eval;
  bool target_met = false;
  std::size_t evaluations = 0;
  // Evaluations used up to and including the confirming re-evaluations.
  std::optional<std::size_t> evaluations_to_target;
  double best_completion = 0.0;
  std::vector<SearchRecord> history;
};

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Evaluation accounting for one optimizer run: hands out per-evaluation
/// seeds, enforces the budget, keeps the history and the best sample, and
/// confirms target hits with re-evaluations.
class SearchLedger {
 public:
  using EvalFn = std::function<Evaluation(const std::vector<double>&, std::uint64_t)>;

  SearchLedger(EvalFn fn, std::size_t budget, StopRule rule, std::uint64_t seed,
               std::size_t jobs = 1);

  bool exhausted() const { return history_.size() >= budget_; }
  std::size_t remaining() const { return budget_ - std::min(budget_, history_.size()); }
  bool done() const { return result_.target_met || exhausted(); }

  /// Evaluates x with the next evaluation seed. Requires !exhausted().
  Evaluation evaluate(const std::vector<double>& x, int active_segment = -1);
  /// Evaluates a batch in parallel; truncated to the remaining budget.
  std::vector<Evaluation> evaluate_batch(const std::vector<std::vector<double>>& xs);

  /// Re-runs x on fresh seeds when `e` meets the target; returns true (and
  /// marks the run finished) if the re-evaluations confirm it.
  bool confirm(const std::vector<double>& x, const Evaluation& e);
  bool meets_target(const Evaluation& e) const;

  void mark_accepted(std::size_t record_index, bool accepted);
  std::size_t last_index() const { return history_.size() - 1; }
  const std::vector<SearchRecord>& history() const { return history_; }

  SearchResult finish();

 private:
  void note(const std::vector<double>& x, const Evaluation& e);

  EvalFn fn_;
  std::size_t budget_;
  StopRule rule_;
  std::uint64_t seed_;
  std::size_t jobs_;
  std::size_t primary_count_ = 0;
  std::size_t confirm_rounds_ = 0;
  std::vector<SearchRecord> history_;
  SearchResult result_;
  bool have_best_ = false;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace autotune
