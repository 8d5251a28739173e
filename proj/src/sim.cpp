#include "pve/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "pve/distributions.hpp"
#include "pve/errors.hpp"

namespace pve {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void validate(const SimConfig& config, bool allow_zero_sigma = false) {
  if (config.n < 2 || config.p < 2 || config.n < config.p)
    throw DimensionError("simulation needs n >= p >= 2");
  if (config.rank < 0 || config.rank > config.p)
    throw DimensionError("rank must lie in [0, p]");
  if (config.reps < 1) throw InvalidInputError("reps must be >= 1");
  if (config.sigma_grid.empty())
    throw InvalidInputError("sigma grid must not be empty");
  for (double s : config.sigma_grid) {
    if (!std::isfinite(s) || s < 0.0 || (s == 0.0 && !allow_zero_sigma))
      throw InvalidInputError(
          "sigma values must be finite and positive for this experiment");
  }
  if (!(config.alpha > 0.0 && config.alpha < 1.0))
    throw InvalidInputError("alpha must lie in (0, 1)");
  if (!(config.alpha_split > 0.0 && config.alpha_split < 1.0))
    throw InvalidInputError("alpha split must lie in (0, 1)");
  if (!(config.c > 0.0)) throw InvalidInputError("c must be > 0");
}

int resolve_threads(const SimConfig& config) {
  int limit = config.threads;
  if (limit <= 0) {
    limit = static_cast<int>(std::thread::hardware_concurrency());
    if (limit <= 0) limit = 1;
    if (const char* env = std::getenv("PVE_INFER_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0) limit = std::min(limit, cap);
    }
  }
  return std::max(1, limit);
}

// Runs fn(rep) for rep in [0, count) across a small worker pool.  Work is
// claimed through an atomic counter; outputs must go to per-rep slots so the
// claiming order cannot matter.
template <typename Fn>
void parallel_replicates(int count, int threads, const Fn& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int rep = 0; rep < count; ++rep) fn(rep);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= count) return;
      try {
        fn(rep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int i = 0; i < threads - 1; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Eigen::MatrixXd gaussian_matrix(Rng& rng, int n, int p) {
  Eigen::MatrixXd m(n, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) m(i, j) = rng.gaussian();
  return m;
}

// Substream roles within one replicate.
enum SubStream : std::uint64_t { kThetaStream, kNoiseStream, kThinStream };

Rng replicate_stream(const SimConfig& config, int rep, SubStream role) {
  return Rng::stream(config.seed,
                     std::uint64_t(rep) * 4 + std::uint64_t(role));
}

NoiseModel resolve_noise(const SimConfig& config, const SvdFactorization& f,
                         double sigma) {
  if (config.sigma_mode == SigmaMode::estimated)
    return estimate_sigma2(f.s, config.n, config.p);
  return {sigma * sigma, NoiseSource::known};
}

void flatten(std::vector<std::vector<SimRow>>& buckets, SimResult& result) {
  size_t total = 0;
  for (const auto& b : buckets) total += b.size();
  result.rows.reserve(total);
  for (auto& b : buckets)
    result.rows.insert(result.rows.end(), b.begin(), b.end());
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / double(v.size());
}

}  // namespace

Eigen::MatrixXd gen_theta(int n, int p, int rank, Rng& rng) {
  if (rank < 0 || rank > p)
    throw DimensionError("mean-matrix rank must lie in [0, p]");
  if (rank == 0) return Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd spectrum(rank);
  const double scale = std::pow(double(n) * double(p), 0.25);
  for (int i = 0; i < rank; ++i)
    spectrum(i) = std::pow(double(rank - i), 0.2) * scale;
  // Orthonormal factors drawn uniformly: singular vectors of independent
  // Gaussian matrices are rotation invariant.
  Eigen::JacobiSVD<Eigen::MatrixXd> left(gaussian_matrix(rng, n, rank),
                                          Eigen::ComputeThinU);
  Eigen::JacobiSVD<Eigen::MatrixXd> right(gaussian_matrix(rng, p, rank),
                                           Eigen::ComputeThinU);
  return left.matrixU() * spectrum.asDiagonal() *
         right.matrixU().transpose();
}

Eigen::MatrixXd gen_theta(int n, int p, int rank, std::uint64_t seed) {
  Rng rng(seed);
  return gen_theta(n, p, rank, rng);
}

double ks_statistic(std::vector<double> values) {
  if (values.empty()) throw InvalidInputError("KS needs at least one value");
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  double d = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    d = std::max(d, std::abs(values[i] - double(i) / n));
    d = std::max(d, std::abs(values[i] - double(i + 1) / n));
  }
  return d;
}

double ks_critical(int n_samples, double level) {
  if (n_samples < 1) throw InvalidInputError("KS needs at least one sample");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidInputError("level must lie in (0, 1)");
  // Tail of the Kolmogorov law: Q(x) = 2 sum_j (-1)^{j-1} exp(-2 j^2 x^2).
  const auto tail = [](double x) {
    double q = 0.0;
    for (int j = 1; j <= 100; ++j) {
      const double term = 2.0 * std::exp(-2.0 * double(j) * double(j) * x * x);
      q += (j % 2 == 1) ? term : -term;
      if (term < 1e-16) break;
    }
    return q;
  };
  double lo = 0.2, hi = 3.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (tail(mid) > level ? lo : hi) = mid;
  }
  const double x = 0.5 * (lo + hi);
  const double n = double(n_samples);
  return x / (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n));
}

SimResult run_type1(const SimConfig& config) {
  validate(config);
  const int arms = static_cast<int>(config.sigma_grid.size());
  std::vector<std::vector<SimRow>> buckets(size_t(arms) * config.reps);
  parallel_replicates(config.reps, resolve_threads(config), [&](int rep) {
    Rng noise_rng = replicate_stream(config, rep, kNoiseStream);
    const Eigen::MatrixXd g = gaussian_matrix(noise_rng, config.n, config.p);
    for (int si = 0; si < arms; ++si) {
      const double sigma = config.sigma_grid[si];
      const auto x = DataMatrix::from(sigma * g);
      const auto f = compute_svd(x);
      const auto noise = resolve_noise(config, f, sigma);
      const int r = select_rank(f.s, config.rule);
      auto& out = buckets[size_t(si) * config.reps + rep];
      for (int k = 1; k <= r; ++k) {
        SimRow row;
        row.rep = rep;
        row.sigma = sigma;
        row.r = r;
        row.k = k;
        row.p_selective = p_value(f, k, config.rule, noise);
        row.p_unadjusted = p_value(f, k, {RuleKind::none}, noise);
        out.push_back(row);
      }
    }
  });
  SimResult result;
  flatten(buckets, result);

  std::map<std::pair<double, int>, std::vector<double>> sel, unadj;
  for (const auto& row : result.rows) {
    sel[{row.sigma, row.k}].push_back(row.p_selective);
    unadj[{row.sigma, row.k}].push_back(row.p_unadjusted);
  }
  for (const auto& [key, pvals] : sel) {
    SimSummaryRecord rec;
    rec.metric = "ks_selective";
    rec.sigma = key.first;
    rec.k = key.second;
    rec.kept = static_cast<int>(pvals.size());
    rec.value = ks_statistic(pvals);
    rec.extra = ks_critical(rec.kept, 0.01);
    result.summary.push_back(rec);

    SimSummaryRecord mrec;
    mrec.metric = "mean_unadjusted";
    mrec.sigma = key.first;
    mrec.k = key.second;
    mrec.kept = rec.kept;
    mrec.value = mean_of(unadj[key]);
    mrec.extra = std::sqrt(1.0 / 12.0 / double(rec.kept));  // SE if uniform
    result.summary.push_back(mrec);
  }
  return result;
}

SimResult run_power(const SimConfig& config) {
  validate(config);
  const int arms = static_cast<int>(config.sigma_grid.size());
  std::vector<std::vector<SimRow>> buckets(size_t(arms) * config.reps);
  parallel_replicates(config.reps, resolve_threads(config), [&](int rep) {
    Rng theta_rng = replicate_stream(config, rep, kThetaStream);
    Rng noise_rng = replicate_stream(config, rep, kNoiseStream);
    const Eigen::MatrixXd theta =
        gen_theta(config.n, config.p, config.rank, theta_rng);
    const Eigen::MatrixXd g = gaussian_matrix(noise_rng, config.n, config.p);
    for (int si = 0; si < arms; ++si) {
      const double sigma = config.sigma_grid[si];
      const auto x = DataMatrix::from(theta + sigma * g);
      const auto f = compute_svd(x);
      const auto noise = resolve_noise(config, f, sigma);
      const int r = select_rank(f.s, config.rule);
      auto& out = buckets[size_t(si) * config.reps + rep];
      for (int k = 1; k <= r; ++k) {
        SimRow row;
        row.rep = rep;
        row.sigma = sigma;
        row.r = r;
        row.k = k;
        row.p_selective = p_value(f, k, config.rule, noise);
        out.push_back(row);
      }
    }
  });
  SimResult result;
  flatten(buckets, result);

  std::map<double, int> exact_rank;
  std::map<double, int> datasets;
  std::map<std::pair<double, int>, std::pair<int, int>> kept_reject;
  for (const auto& row : result.rows) {
    if (row.k == 1) {
      ++datasets[row.sigma];
      if (row.r == config.rank) ++exact_rank[row.sigma];
    }
    auto& kr = kept_reject[{row.sigma, row.k}];
    ++kr.first;
    if (row.p_selective <= config.alpha) ++kr.second;
  }
  for (const auto& [sigma, count] : datasets) {
    SimSummaryRecord rec;
    rec.metric = "detection";
    rec.sigma = sigma;
    rec.k = 0;
    rec.kept = count;
    rec.events = exact_rank[sigma];
    rec.value = double(rec.events) / double(count);
    rec.extra = std::sqrt(rec.value * (1.0 - rec.value) / double(count));
    result.summary.push_back(rec);
  }
  for (const auto& [key, kr] : kept_reject) {
    SimSummaryRecord rec;
    rec.metric = "power";
    rec.sigma = key.first;
    rec.k = key.second;
    rec.kept = kr.first;
    rec.events = kr.second;
    rec.value = double(kr.second) / double(kr.first);
    rec.extra =
        std::sqrt(rec.value * (1.0 - rec.value) / double(kr.first));
    result.summary.push_back(rec);
  }
  return result;
}

SimResult run_coverage(const SimConfig& config) {
  validate(config);
  if (config.alpha_grid.empty())
    throw InvalidInputError("alpha grid must not be empty");
  for (double a : config.alpha_grid)
    if (!(a > 0.0 && a < 1.0))
      throw InvalidInputError("alpha values must lie in (0, 1)");
  const int arms = static_cast<int>(config.sigma_grid.size());
  std::vector<std::vector<SimRow>> buckets(size_t(arms) * config.reps);
  parallel_replicates(config.reps, resolve_threads(config), [&](int rep) {
    Rng theta_rng = replicate_stream(config, rep, kThetaStream);
    Rng noise_rng = replicate_stream(config, rep, kNoiseStream);
    const Eigen::MatrixXd theta =
        gen_theta(config.n, config.p, config.rank, theta_rng);
    const Eigen::MatrixXd g = gaussian_matrix(noise_rng, config.n, config.p);
    for (int si = 0; si < arms; ++si) {
      const double sigma = config.sigma_grid[si];
      const auto x = DataMatrix::from(theta + sigma * g);
      NoiseModel base{sigma * sigma, NoiseSource::known};
      if (config.sigma_mode == SigmaMode::estimated)
        base = estimate_sigma2(compute_svd(x).s, config.n, config.p);
      Rng thin_rng = replicate_stream(config, rep, kThinStream);
      const auto pair = thin(x, config.c, base, thin_rng);
      const auto svd1 = compute_svd(pair.x1);
      const int r = select_rank(svd1.s, config.rule);
      auto& out = buckets[size_t(si) * config.reps + rep];
      for (int k = 1; k <= r; ++k) {
        const double truth = population_pve(svd1.u.col(k - 1),
                                            svd1.v.col(k - 1), theta);
        const auto est = mle_pve(pair, svd1, k, config.rule);
        for (double alpha : config.alpha_grid) {
          const double alpha1 = config.alpha_split * alpha;
          const double alpha2 = (1.0 - config.alpha_split) * alpha;
          const auto rep_k =
              ci_pve(pair, svd1, k, config.rule, alpha1, alpha2);
          SimRow row;
          row.rep = rep;
          row.sigma = sigma;
          row.alpha = alpha;
          row.r = r;
          row.k = k;
          row.pve_true = truth;
          row.ci_lo = rep_k.pve_interval.lo;
          row.ci_hi = rep_k.pve_interval.hi;
          row.covered = (row.ci_lo <= truth && truth <= row.ci_hi) ? 1 : 0;
          row.pve_mle = est ? *est : kNaN;
          out.push_back(row);
        }
      }
    }
  });
  SimResult result;
  flatten(buckets, result);

  std::map<std::tuple<double, double, int>, std::pair<int, int>> agg;
  for (const auto& row : result.rows) {
    auto& cell = agg[{row.sigma, row.alpha, row.k}];
    ++cell.first;
    if (row.covered == 1) ++cell.second;
  }
  for (const auto& [key, cell] : agg) {
    SimSummaryRecord rec;
    rec.metric = "coverage";
    rec.sigma = std::get<0>(key);
    rec.alpha = std::get<1>(key);
    rec.k = std::get<2>(key);
    rec.kept = cell.first;
    rec.events = cell.second;
    rec.value = double(cell.second) / double(cell.first);
    rec.extra =
        std::sqrt(rec.value * (1.0 - rec.value) / double(cell.first));
    result.summary.push_back(rec);
  }
  return result;
}

SimResult run_ratio(const SimConfig& config) {
  validate(config, /*allow_zero_sigma=*/true);
  const int arms = static_cast<int>(config.sigma_grid.size());
  std::vector<std::vector<SimRow>> buckets(size_t(arms) * config.reps);
  parallel_replicates(config.reps, resolve_threads(config), [&](int rep) {
    Rng theta_rng = replicate_stream(config, rep, kThetaStream);
    Rng noise_rng = replicate_stream(config, rep, kNoiseStream);
    const Eigen::MatrixXd theta =
        gen_theta(config.n, config.p, config.rank, theta_rng);
    const Eigen::MatrixXd g = gaussian_matrix(noise_rng, config.n, config.p);
    for (int si = 0; si < arms; ++si) {
      const double sigma = config.sigma_grid[si];
      const auto x = DataMatrix::from(theta + sigma * g);
      const auto f = compute_svd(x);
      const int r = select_rank(f.s, config.rule);
      auto& out = buckets[size_t(si) * config.reps + rep];
      for (int k = 1; k <= r; ++k) {
        SimRow row;
        row.rep = rep;
        row.sigma = sigma;
        row.r = r;
        row.k = k;
        row.sample_pve = sample_pve(f.s, k);
        row.population_pve =
            population_pve(f.u.col(k - 1), f.v.col(k - 1), theta);
        out.push_back(row);
      }
    }
  });
  SimResult result;
  flatten(buckets, result);

  std::map<std::pair<double, int>, std::vector<double>> ratios;
  for (const auto& row : result.rows) {
    if (row.population_pve > 0.0)
      ratios[{row.sigma, row.k}].push_back(row.sample_pve /
                                           row.population_pve);
  }
  for (auto& [key, values] : ratios) {
    std::sort(values.begin(), values.end());
    const size_t m = values.size();
    const double median = m % 2 == 1
                              ? values[m / 2]
                              : 0.5 * (values[m / 2 - 1] + values[m / 2]);
    SimSummaryRecord rec;
    rec.metric = "median_log_ratio";
    rec.sigma = key.first;
    rec.k = key.second;
    rec.kept = static_cast<int>(m);
    rec.value = std::log(median);
    rec.extra = median;
    result.summary.push_back(rec);
  }
  return result;
}

SimResult run_experiment(ExperimentKind kind, const SimConfig& config) {
  switch (kind) {
    case ExperimentKind::type1:
      return run_type1(config);
    case ExperimentKind::power:
      return run_power(config);
    case ExperimentKind::coverage:
      return run_coverage(config);
    case ExperimentKind::ratio:
      return run_ratio(config);
  }
  throw InvalidInputError("unknown experiment");
}

}  // namespace pve
