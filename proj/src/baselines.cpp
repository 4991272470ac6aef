#include "autotune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace autotune {

namespace {

SearchLedger make_ledger(const VectorProblem& problem, const SearchConfig& cfg) {
  if (!problem.evaluate) throw std::invalid_argument("problem has no objective");
  return SearchLedger(problem.evaluate, cfg.budget, cfg.stop, cfg.seed, cfg.jobs);
}

std::vector<double> project(const VectorProblem& p, std::vector<double> x) {
  return p.project ? p.project(x) : x;
}

void check_start(const VectorProblem& p, const std::vector<double>& x0) {
  if (x0.size() != p.dimension) throw std::invalid_argument("start point has the wrong dimension");
}

// Evaluates a generation and confirms the first target hit, in order.
// Returns the evaluations actually made.
std::vector<Evaluation> evaluate_generation(SearchLedger& ledger,
                                            const std::vector<std::vector<double>>& xs) {
  const std::size_t first = ledger.history().size();
  auto evals = ledger.evaluate_batch(xs);
  for (std::size_t i = 0; i < evals.size(); ++i) {
    if (ledger.confirm(xs[i], evals[i])) {
      ledger.mark_accepted(first + i, true);
      break;
    }
  }
  return evals;
}

}  // namespace

double RandomSearchConfig::half_width() const { return std * std::sqrt(3.0); }

std::size_t cma_default_lambda(std::size_t n) {
  return 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(n))));
}

SearchResult random_search(const VectorProblem& problem, const std::vector<double>& x0,
                           const SearchConfig& cfg, const RandomSearchConfig& rs) {
  check_start(problem, x0);
  SearchLedger ledger = make_ledger(problem, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5253ULL));
  const double d = rs.half_width();
  std::uniform_real_distribution<double> u(-d, d);
  while (!ledger.done()) {
    std::vector<double> x(x0);
    for (double& v : x) v += u(rng);
    x = project(problem, x);
    const Evaluation e = ledger.evaluate(x);
    const std::size_t idx = ledger.last_index();
    if (ledger.confirm(x, e)) ledger.mark_accepted(idx, true);
  }
  return ledger.finish();
}

SearchResult pso(const VectorProblem& problem, const std::vector<double>& x0,
                 const SearchConfig& cfg, const PsoConfig& pc) {
  check_start(problem, x0);
  if (pc.particles == 0) throw std::invalid_argument("pso needs at least one particle");
  if (cfg.budget < pc.particles) throw std::invalid_argument("pso budget is smaller than the swarm");
  SearchLedger ledger = make_ledger(problem, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x50534fULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = problem.dimension;
  std::vector<double> vmax(n, std::numeric_limits<double>::infinity());
  for (std::size_t d = 0; d < n && d < problem.lower.size() && d < problem.upper.size(); ++d) {
    const double width = problem.upper[d] - problem.lower[d];
    if (std::isfinite(width)) vmax[d] = pc.velocity_clamp * width;
  }

  std::vector<std::vector<double>> x(pc.particles), v(pc.particles, std::vector<double>(n, 0.0));
  for (auto& p : x) {
    p = x0;
    for (double& c : p) c += pc.init_sigma * normal(rng);
    p = project(problem, p);
  }
  std::vector<std::vector<double>> pbest = x;
  std::vector<double> pbest_score(pc.particles, -std::numeric_limits<double>::infinity());
  std::vector<double> gbest;
  double gbest_score = -std::numeric_limits<double>::infinity();

  while (!ledger.done()) {
    const auto evals = evaluate_generation(ledger, x);
    if (evals.size() < x.size()) break;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (evals[i].score > pbest_score[i]) {
        pbest_score[i] = evals[i].score;
        pbest[i] = x[i];
      }
      if (evals[i].score > gbest_score) {
        gbest_score = evals[i].score;
        gbest = x[i];
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (std::size_t d = 0; d < n; ++d) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double vd = pc.inertia * v[i][d] + pc.cognitive * r1 * (pbest[i][d] - x[i][d]) +
                    pc.social * r2 * (gbest[d] - x[i][d]);
        v[i][d] = std::clamp(vd, -vmax[d], vmax[d]);
        x[i][d] += v[i][d];
      }
      x[i] = project(problem, x[i]);
    }
  }
  return ledger.finish();
}

SearchResult cma_es(const VectorProblem& problem, const std::vector<double>& x0,
                    const SearchConfig& cfg, const CmaEsConfig& cc) {
  check_start(problem, x0);
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const std::size_t n = problem.dimension;
  if (n == 0) throw std::invalid_argument("cma-es needs a non-empty problem");
  const std::size_t lambda = cc.lambda ? cc.lambda : cma_default_lambda(n);
  if (lambda < 2) throw std::invalid_argument("cma-es population must be at least 2");
  if (cfg.budget < lambda) throw std::invalid_argument("cma-es budget is smaller than one generation");
  SearchLedger ledger = make_ledger(problem, cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x434d41ULL));
  std::normal_distribution<double> normal(0.0, 1.0);

  const double nd = static_cast<double>(n);
  const std::size_t mu = lambda / 2;
  VectorXd w(mu);
  for (std::size_t i = 0; i < mu; ++i) {
    w[i] = std::log(static_cast<double>(lambda) / 2.0 + 0.5) - std::log(static_cast<double>(i + 1));
  }
  w /= w.sum();
  const double mueff = 1.0 / w.squaredNorm();
  const double c_c = (4.0 + mueff / nd) / (nd + 4.0 + 2.0 * mueff / nd);
  const double c_s = (mueff + 2.0) / (nd + mueff + 5.0);
  const double c_1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff);
  const double c_mu = std::min(1.0 - c_1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nd + 2.0) * (nd + 2.0) + mueff));
  const double damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (nd + 1.0)) - 1.0) + c_s;
  const double chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  VectorXd mean = Eigen::Map<const VectorXd>(x0.data(), static_cast<Eigen::Index>(n));
  double sigma = cc.sigma0;
  MatrixXd C = MatrixXd::Identity(n, n);
  MatrixXd B = MatrixXd::Identity(n, n);
  VectorXd D = VectorXd::Ones(n);
  VectorXd p_c = VectorXd::Zero(n), p_s = VectorXd::Zero(n);

  for (std::size_t gen = 0; !ledger.done(); ++gen) {
    std::vector<std::vector<double>> xs(lambda);
    std::vector<VectorXd> ys(lambda);
    for (std::size_t k = 0; k < lambda; ++k) {
      VectorXd z(n);
      for (std::size_t d = 0; d < n; ++d) z[d] = normal(rng);
      const VectorXd raw = mean + sigma * (B * D.asDiagonal() * z);
      std::vector<double> x(raw.data(), raw.data() + n);
      xs[k] = project(problem, x);
      ys[k] = (Eigen::Map<const VectorXd>(xs[k].data(), static_cast<Eigen::Index>(n)) - mean) / sigma;
    }
    const auto evals = evaluate_generation(ledger, xs);
    if (evals.size() < lambda || ledger.done()) break;

    std::vector<std::size_t> order(lambda);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return evals[a].score > evals[b].score; });

    VectorXd y_w = VectorXd::Zero(n);
    for (std::size_t i = 0; i < mu; ++i) y_w += w[i] * ys[order[i]];
    mean += sigma * y_w;

    const VectorXd c_inv_sqrt_yw = B * (B.transpose() * y_w).cwiseQuotient(D);
    p_s = (1.0 - c_s) * p_s + std::sqrt(c_s * (2.0 - c_s) * mueff) * c_inv_sqrt_yw;
    const double ps_norm = p_s.norm();
    const double hsig_lhs = ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_s, 2.0 * static_cast<double>(gen + 1)));
    const double h_sig = hsig_lhs < (1.4 + 2.0 / (nd + 1.0)) * chi_n ? 1.0 : 0.0;
    p_c = (1.0 - c_c) * p_c + h_sig * std::sqrt(c_c * (2.0 - c_c) * mueff) * y_w;

    MatrixXd rank_mu = MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < mu; ++i) rank_mu += w[i] * ys[order[i]] * ys[order[i]].transpose();
    C = (1.0 - c_1 - c_mu) * C +
        c_1 * (p_c * p_c.transpose() + (1.0 - h_sig) * c_c * (2.0 - c_c) * C) + c_mu * rank_mu;
    sigma *= std::exp((c_s / damps) * (ps_norm / chi_n - 1.0));

    C = 0.5 * (C + C.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(C);
    VectorXd ev = eig.eigenvalues();
    bool repaired = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (!(ev[i] >= cc.eigen_floor)) {
        ev[i] = cc.eigen_floor;
        repaired = true;
      }
    }
    B = eig.eigenvectors();
    D = ev.cwiseSqrt();
    if (repaired) C = B * ev.asDiagonal() * B.transpose();
    if (!std::isfinite(sigma) || !mean.allFinite()) break;
  }
  return ledger.finish();
}

RegressorOnlyResult regressor_only(const WarmStartModel& model, const ReferenceTrajectory& ref,
                                   const SegmentPlan& plan, const Objective& objective,
                                   std::uint64_t seed, int horizon_max, std::size_t n_seeds,
                                   std::size_t jobs) {
  RegressorOnlyResult out;
  out.prediction = predict_init(ref, plan, model, horizon_max);
  out.evaluations.resize(n_seeds);
  parallel_for(n_seeds, jobs, [&](std::size_t j) {
    out.evaluations[j] = objective.evaluate(out.prediction.params, derive_seed(seed, 0x52454fULL, j));
  });
  out.all_passed = n_seeds > 0;
  for (const auto& e : out.evaluations) {
    out.mean_completion += e.completion;
    out.all_passed = out.all_passed && e.completion >= 100.0 - 1e-9;
  }
  if (n_seeds > 0) out.mean_completion /= static_cast<double>(n_seeds);
  return out;
}

VectorProblem sphere_problem(const std::vector<double>& optimum) {
  VectorProblem p;
  p.dimension = optimum.size();
  p.evaluate = [optimum](const std::vector<double>& x, std::uint64_t seed) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) f += (x[i] - optimum[i]) * (x[i] - optimum[i]);
    return Evaluation{-f, 0.0, f, seed};
  };
  return p;
}

VectorProblem rosenbrock_problem(std::size_t n) {
  VectorProblem p;
  p.dimension = n;
  p.evaluate = [](const std::vector<double>& x, std::uint64_t seed) {
    double f = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      f += 100.0 * a * a + b * b;
    }
    return Evaluation{-f, 0.0, f, seed};
  };
  return p;
}

}  // namespace autotune
