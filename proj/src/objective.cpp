#include "autotune/objective.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

namespace autotune {

Evaluation RolloutObjective::evaluate(const ParamVector& w, std::uint64_t seed) const {
  const EvaluationOutcome o = outcome(w, seed);
  return {autotune::score(o.penalized_time), o.completion, o.penalized_time, seed};
}

EvaluationOutcome RolloutObjective::outcome(const ParamVector& w, std::uint64_t seed) const {
  return rollout(ref_, plan_, w, seed, cfg_);
}

VectorProblem param_problem(const Objective& objective, std::size_t n_segments,
                            int horizon_max) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  VectorProblem p;
  p.dimension = n_segments * kParamsPerSegment;
  p.project = [horizon_max](const std::vector<double>& x) {
    return ParamVector::from_flat(x, horizon_max).flatten();
  };
  p.evaluate = [&objective, horizon_max](const std::vector<double>& x, std::uint64_t seed) {
    return objective.evaluate(ParamVector::from_flat(x, horizon_max), seed);
  };
  for (std::size_t s = 0; s < n_segments; ++s) {
    for (int i = 0; i < 4; ++i) {
      p.lower.push_back(0.0);
      p.upper.push_back(kInf);
    }
    p.lower.push_back(1.0);
    p.upper.push_back(static_cast<double>(horizon_max));
  }
  return p;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  const std::size_t count = std::min(jobs, n);
  workers.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

SearchLedger::SearchLedger(EvalFn fn, std::size_t budget, StopRule rule, std::uint64_t seed,
                           std::size_t jobs)
    : fn_(std::move(fn)), budget_(budget), rule_(std::move(rule)), seed_(seed),
      jobs_(std::max<std::size_t>(1, jobs)) {
  if (budget_ == 0) throw std::invalid_argument("evaluation budget must be at least 1");
}

bool SearchLedger::meets_target(const Evaluation& e) const {
  return rule_.enabled && e.completion >= rule_.target_completion - 1e-9;
}

void SearchLedger::note(const std::vector<double>& x, const Evaluation& e) {
  if (!have_best_ || e.score > result_.best_eval.score) {
    result_.best = x;
    result_.best_eval = e;
    have_best_ = true;
  }
  result_.best_completion = std::max(result_.best_completion, e.completion);
}

Evaluation SearchLedger::evaluate(const std::vector<double>& x, int active_segment) {
  if (exhausted()) throw std::logic_error("evaluation budget exhausted");
  const std::uint64_t seed = derive_seed(seed_, primary_count_++);
  const Evaluation e = fn_(x, seed);
  SearchRecord r;
  r.iter = history_.size();
  r.active_segment = active_segment;
  r.score = e.score;
  r.completion = e.completion;
  r.penalized_time = e.penalized_time;
  r.seed = seed;
  r.params = x;
  history_.push_back(std::move(r));
  note(x, e);
  return e;
}

std::vector<Evaluation> SearchLedger::evaluate_batch(const std::vector<std::vector<double>>& xs) {
  const std::size_t n = std::min(xs.size(), remaining());
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = derive_seed(seed_, primary_count_++);
  std::vector<Evaluation> out(n);
  parallel_for(n, jobs_, [&](std::size_t i) { out[i] = fn_(xs[i], seeds[i]); });
  for (std::size_t i = 0; i < n; ++i) {
    SearchRecord r;
    r.iter = history_.size();
    r.score = out[i].score;
    r.completion = out[i].completion;
    r.penalized_time = out[i].penalized_time;
    r.seed = seeds[i];
    r.params = xs[i];
    history_.push_back(std::move(r));
    note(xs[i], out[i]);
  }
  return out;
}

bool SearchLedger::confirm(const std::vector<double>& x, const Evaluation& e) {
  if (!meets_target(e) || result_.target_met) return false;
  const std::size_t wanted = static_cast<std::size_t>(std::max(0, rule_.reeval_count));
  const std::size_t n = std::min(wanted, remaining());
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t j = 0; j < n; ++j) {
    seeds[j] = j < rule_.reeval_seeds.size() ? rule_.reeval_seeds[j]
                                             : derive_seed(seed_ ^ 0x5eedULL, confirm_rounds_, j);
  }
  ++confirm_rounds_;
  std::vector<Evaluation> out(n);
  parallel_for(n, jobs_, [&](std::size_t j) { out[j] = fn_(x, seeds[j]); });

  std::size_t hits = 0;
  for (std::size_t j = 0; j < n; ++j) {
    SearchRecord r;
    r.iter = history_.size();
    r.reeval = true;
    r.score = out[j].score;
    r.completion = out[j].completion;
    r.penalized_time = out[j].penalized_time;
    r.seed = seeds[j];
    r.params = x;
    history_.push_back(std::move(r));
    if (meets_target(out[j])) ++hits;
  }
  const bool confirmed = rule_.require_all ? (n == wanted && hits == wanted) : (2 * hits > wanted);
  if (confirmed) {
    result_.target_met = true;
    result_.best = x;
    result_.best_eval = e;
    result_.evaluations_to_target = history_.size();
  }
  return confirmed;
}

void SearchLedger::mark_accepted(std::size_t record_index, bool accepted) {
  history_.at(record_index).accepted = accepted;
}

SearchResult SearchLedger::finish() {
  result_.history = history_;
  result_.evaluations = history_.size();
  return result_;
}

}  // namespace autotune
