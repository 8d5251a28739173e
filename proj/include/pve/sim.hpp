#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pve/inference.hpp"
#include "pve/matrix.hpp"
#include "pve/rng.hpp"
#include "pve/selection.hpp"

namespace pve {

enum class ExperimentKind { type1, power, coverage, ratio };

enum class SigmaMode { true_value, estimated };

struct SimConfig {
  int n = 50;
  int p = 10;
  int rank = 5;
  std::vector<double> sigma_grid = {1.0};
  std::vector<double> alpha_grid = {0.1};  // coverage arm only
  SelectionRule rule{RuleKind::zg};
  int reps = 1000;
  double alpha = 0.1;        // test level for power
  double alpha_split = 0.75; // share of alpha spent on the numerator
  double c = 1.0;
  std::uint64_t seed = 1;
  SigmaMode sigma_mode = SigmaMode::true_value;
  int threads = 0;  // 0 = respect PVE_INFER_THREADS, else hardware
};

// One tested component in one replicate.  Fields not produced by an
// experiment stay NaN (or -1 for the flags) and serialize as empty cells.
struct SimRow {
  int rep = 0;
  double sigma = 0.0;
  double alpha = 0.0;
  int r = 0;
  int k = 0;
  double p_selective = std::numeric_limits<double>::quiet_NaN();
  double p_unadjusted = std::numeric_limits<double>::quiet_NaN();
  double pve_true = std::numeric_limits<double>::quiet_NaN();
  double ci_lo = std::numeric_limits<double>::quiet_NaN();
  double ci_hi = std::numeric_limits<double>::quiet_NaN();
  int covered = -1;
  double pve_mle = std::numeric_limits<double>::quiet_NaN();
  double sample_pve = std::numeric_limits<double>::quiet_NaN();
  double population_pve = std::numeric_limits<double>::quiet_NaN();
};

// One aggregated metric; `metric` says which and `k == 0` marks dataset-
// level records (rank detection).
struct SimSummaryRecord {
  std::string metric;
  double sigma = 0.0;
  double alpha = 0.0;
  int k = 0;
  int kept = 0;    // replicates entering the denominator
  int events = 0;  // rejections, hits, or exact-rank selections
  double value = 0.0;
  double extra = 0.0;  // critical value or standard error when relevant
};

struct SimResult {
  std::vector<SimRow> rows;
  std::vector<SimSummaryRecord> summary;
};

// Random mean matrix with orthonormal factor pairs and the graded spectrum
// (rank, rank-1, ..., 1)^{1/5} scaled by (np)^{1/4}; rank 0 gives the zero
// matrix.
Eigen::MatrixXd gen_theta(int n, int p, int rank, Rng& rng);
Eigen::MatrixXd gen_theta(int n, int p, int rank, std::uint64_t seed);

// One-sample Kolmogorov-Smirnov distance to the uniform law on [0, 1].
double ks_statistic(std::vector<double> values);

// Critical distance at the given level for n samples (asymptotic law with
// the small-sample size correction).
double ks_critical(int n_samples, double level);

SimResult run_type1(const SimConfig& config);
SimResult run_power(const SimConfig& config);
SimResult run_coverage(const SimConfig& config);
SimResult run_ratio(const SimConfig& config);

SimResult run_experiment(ExperimentKind kind, const SimConfig& config);

}  // namespace pve
