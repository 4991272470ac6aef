#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "autotune/mpc.hpp"
#include "autotune/objective.hpp"

namespace autotune {

struct TunerConfig {
  double sigma = 5.0;   // proposal std
  double shrink = 0.75; // variance factor for segments preceding the active one
  std::size_t budget = 200;
  StopRule stop;
  std::uint64_t seed = 0;
  // Order in which segments become active; empty means track order.
  std::vector<std::size_t> segment_sweep;
  int horizon_max = 40;
  std::size_t jobs = 1;

  void validate() const;
};

struct TuneResult {
  ParamVector best;
  SearchResult search;

  bool target_met() const { return search.target_met; }
};

/// Gaussian perturbation of every parameter. Segments before
/// `active_segment` use std sigma * sqrt(shrink).
ParamVector propose(const ParamVector& current, const TunerConfig& cfg,
                    std::size_t active_segment, std::mt19937_64& rng);

/// Metropolis acceptance with probability min(1, score_new / score_old).
bool accept(double score_new, double score_old, std::mt19937_64& rng);

/// Constant-temperature Metropolis-Hastings chain over per-segment
/// parameters, stopping once a sample meeting the target survives its
/// re-evaluations or the budget runs out.
TuneResult tune(const Objective& objective, const ParamVector& w0, const TunerConfig& cfg);

}  // namespace autotune
