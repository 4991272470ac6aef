#include "autotune/tuner.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace autotune {

void TunerConfig::validate() const {
  if (!(sigma >= 0.0)) throw std::invalid_argument("tuner.sigma must be >= 0");
  if (!(shrink > 0.0 && shrink <= 1.0)) throw std::invalid_argument("tuner.shrink must be in (0, 1]");
  if (budget < 1) throw std::invalid_argument("tuner.budget must be >= 1");
  if (horizon_max < 1) throw std::invalid_argument("horizon_max must be >= 1");
}

ParamVector propose(const ParamVector& current, const TunerConfig& cfg,
                    std::size_t active_segment, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double shrunk = cfg.sigma * std::sqrt(cfg.shrink);
  ParamVector next;
  next.per_segment.reserve(current.segments());
  for (std::size_t s = 0; s < current.segments(); ++s) {
    const double std = s < active_segment ? shrunk : cfg.sigma;
    auto a = current.per_segment[s].to_array();
    for (double& v : a) v += std * normal(rng);
    next.per_segment.push_back(SegmentParams::from_array(a, cfg.horizon_max));
  }
  return next;
}

bool accept(double score_new, double score_old, std::mt19937_64& rng) {
  if (!(score_old > 0.0)) return true;
  const double ratio = score_new / score_old;
  if (ratio >= 1.0) return true;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  return uniform(rng) < ratio;
}

TuneResult tune(const Objective& objective, const ParamVector& w0, const TunerConfig& cfg) {
  cfg.validate();
  if (!w0.valid(cfg.horizon_max)) throw std::invalid_argument("initial parameters are invalid");

  std::vector<std::size_t> sweep = cfg.segment_sweep;
  if (sweep.empty()) {
    sweep.resize(w0.segments());
    std::iota(sweep.begin(), sweep.end(), std::size_t{0});
  }
  for (std::size_t s : sweep) {
    if (s >= w0.segments()) throw std::invalid_argument("segment sweep index out of range");
  }

  const int hmax = cfg.horizon_max;
  SearchLedger ledger(
      [&objective, hmax](const std::vector<double>& x, std::uint64_t seed) {
        return objective.evaluate(ParamVector::from_flat(x, hmax), seed);
      },
      cfg.budget, cfg.stop, cfg.seed, cfg.jobs);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x4d48ULL));

  std::size_t sweep_pos = 0;
  ParamVector current = w0;
  Evaluation current_eval = ledger.evaluate(current.flatten(), static_cast<int>(sweep[0]));
  ledger.mark_accepted(ledger.last_index(), true);
  ledger.confirm(current.flatten(), current_eval);

  while (!ledger.done()) {
    const std::size_t active = sweep[sweep_pos];
    const ParamVector candidate = propose(current, cfg, active, rng);
    const auto flat = candidate.flatten();
    const Evaluation e = ledger.evaluate(flat, static_cast<int>(active));
    const std::size_t idx = ledger.last_index();
    if (ledger.confirm(flat, e)) {
      ledger.mark_accepted(idx, true);
      break;
    }
    if (accept(e.score, current_eval.score, rng)) {
      ledger.mark_accepted(idx, true);
      current = candidate;
      current_eval = e;
      sweep_pos = (sweep_pos + 1) % sweep.size();
    }
  }

  TuneResult out;
  out.search = ledger.finish();
  out.best = ParamVector::from_flat(out.search.best, hmax);
  return out;
}

}  // namespace autotune
