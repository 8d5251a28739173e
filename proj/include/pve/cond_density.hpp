#pragma once

#include <Eigen/Dense>

#include "pve/interval.hpp"
#include "pve/matrix.hpp"
#include "pve/selection.hpp"

namespace pve {

// Everything fixed while one component is under study: the other singular
// values, the problem size, the noise level, the selection region, and the
// ordering bounds.  `upper` stays +inf for the leading component; quadrature
// caps it per tilt where the log-density has dropped 50 nats below its peak.
struct CondDensityContext {
  int k = 1;
  Eigen::VectorXd s_others;  // remaining singular values, original order
  int n = 0;
  int p = 0;
  double sigma2 = 1.0;
  TruncationSet trunc;
  double lower = 0.0;
  double upper = kInf;
};

inline constexpr int kDefaultSelectionGrid = 256;

CondDensityContext make_context(const SvdFactorization& svd, int k,
                                SelectionRule rule, const NoiseModel& noise,
                                int grid_size = kDefaultSelectionGrid);

// Log of the unnormalized density of component k at value t under tilt
// delta; -inf where the density vanishes (t = 0 with n > p, or t equal to
// another singular value).
double log_h(double t, double delta, const CondDensityContext& ctx);

struct QuadratureOptions {
  double rel_tol = 1e-10;
  int max_depth = 40;
  // Multiplies the initial panel count; used by stability checks.
  int panel_boost = 1;
};

// Mass above s_k_obs divided by total mass, both restricted to the selection
// region intersected with the ordering bounds.  Exactly 0 or 1 when
// s_k_obs sits at an end of the effective domain.
double survival_prob(double delta, const CondDensityContext& ctx,
                     double s_k_obs, const QuadratureOptions& opts = {});

// Mean of the restricted tilted density; lies inside the effective domain
// and increases with the tilt.
double conditional_mean(double delta, const CondDensityContext& ctx,
                        const QuadratureOptions& opts = {});

}  // namespace pve
