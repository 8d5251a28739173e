#include "pve/cond_density.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pve/errors.hpp"

namespace pve {

CondDensityContext make_context(const SvdFactorization& svd, int k,
                                SelectionRule rule, const NoiseModel& noise,
                                int grid_size) {
  const int p = static_cast<int>(svd.s.size());
  const int n = static_cast<int>(svd.u.rows());
  if (k < 1 || k > p) throw InvalidInputError("component index out of range");
  if (!(noise.sigma2 > 0.0)) throw InvalidInputError("noise variance must be positive");

  CondDensityContext ctx;
  ctx.k = k;
  ctx.n = n;
  ctx.p = p;
  ctx.sigma2 = noise.sigma2;
  ctx.s_others.resize(p - 1);
  for (int i = 0, j = 0; i < p; ++i) {
    if (i != k - 1) ctx.s_others(j++) = svd.s(i);
  }
  ctx.lower = k < p ? svd.s(k) : 0.0;
  ctx.upper = k > 1 ? svd.s(k - 2) : kInf;
  const double k1_cap = 2.0 * svd.s(0) + 1.0;
  ctx.trunc = truncation_set(svd.s, k, rule, grid_size, k1_cap);
  return ctx;
}

double log_h(double t, double delta, const CondDensityContext& ctx) {
  if (t < 0.0) return -kInf;
  double v = (-0.5 * t * t + t * delta) / ctx.sigma2;
  if (ctx.n > ctx.p) {
    if (t == 0.0) return -kInf;
    v += double(ctx.n - ctx.p) * std::log(t);
  }
  for (int j = 0; j < ctx.s_others.size(); ++j) {
    const double sj = ctx.s_others(j);
    // |t^2 - sj^2| factored to avoid cancellation near the spectrum.
    const double d = std::abs(t - sj) * (t + sj);
    if (d == 0.0) return -kInf;
    v += std::log(d);
  }
  return v;
}

namespace {

constexpr int kGlPoints = 15;
constexpr double kGlNode[kGlPoints] = {
    -0.9879925180204854, -0.9372733924007060, -0.8482065834104272,
    -0.7244177313601701, -0.5709721726085388, -0.3941513470775634,
    -0.2011940939974345, 0.0,                 0.2011940939974345,
    0.3941513470775634,  0.5709721726085388,  0.7244177313601701,
    0.8482065834104272,  0.9372733924007060,  0.9879925180204854};
constexpr double kGlWeight[kGlPoints] = {
    0.0307532419961173, 0.0703660474881081, 0.1071592204671719,
    0.1395706779261543, 0.1662692058169939, 0.1861610000155622,
    0.1984314853271116, 0.2025782419255613, 0.1984314853271116,
    0.1861610000155622, 0.1662692058169939, 0.1395706779261543,
    0.1071592204671719, 0.0703660474881081, 0.0307532419961173};

// Per-tilt cap replacing an infinite upper limit: the largest t at which the
// log-density is within 50 nats of its running maximum.  Only the leading
// component has an unbounded domain, and there the log-density is smooth and
// eventually dominated by its Gaussian factor, so the crossing is unique.
double find_cap(double delta, const CondDensityContext& ctx) {
  const double a = ctx.lower;
  const double sigma = std::sqrt(ctx.sigma2);
  double b = std::max({2.0 * a + 1.0, delta + 10.0 * sigma, a + 10.0 * sigma});
  double best = -kInf;
  double arg_best = a;
  const auto scan = [&](double from, double to, int nodes) {
    for (int i = 0; i < nodes; ++i) {
      const double t = from + (to - from) * (i + 0.5) / nodes;
      const double v = log_h(t, delta, ctx);
      if (v > best) {
        best = v;
        arg_best = t;
      }
    }
  };
  scan(a, b, 65);
  int doublings = 0;
  while (log_h(b, delta, ctx) > best - 50.0) {
    const double next = 2.0 * b;
    scan(b, next, 33);
    b = next;
    if (++doublings > 200) throw NumericalError("cap search failed to terminate");
  }
  double lo = arg_best, hi = b;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (log_h(mid, delta, ctx) >= best - 50.0 ? lo : hi) = mid;
  }
  return hi;
}

struct Panel {
  double a, b;
};

// Effective integration pieces and a shared panel decomposition, plus the
// normalization shift taken from the panel sample points.
struct Workspace {
  std::vector<RealInterval> pieces;
  std::vector<std::vector<Panel>> panels;  // per piece
  double shift = -kInf;                    // max of log_h over panel nodes
};

// Ascending cut offsets from an edge: the first panel has width w0 and the
// widths double until they reach cap_w, then stay uniform.  Offsets stop
// strictly before limit.
std::vector<double> graded_offsets(double w0, double cap_w, double limit) {
  std::vector<double> offs;
  double d = w0;
  while (d < limit) {
    offs.push_back(d);
    d += std::min(d, cap_w);
  }
  return offs;
}

Workspace prepare(double delta, const CondDensityContext& ctx,
                  const QuadratureOptions& opts) {
  Workspace w;
  double cap = ctx.upper;
  if (std::isinf(cap)) cap = find_cap(delta, ctx);
  w.pieces = ctx.trunc.clip(ctx.lower, cap);
  if (w.pieces.empty()) {
    throw DegenerateDensityError("selection region carries no width");
  }
  const double sigma = std::sqrt(ctx.sigma2);
  for (const auto& piece : w.pieces) {
    const double width = piece.hi - piece.lo;
    // Panels grade dyadically away from both edges: piece edges carry the
    // log singularities of the spectrum-repulsion factors, and when the tilt
    // sits far outside the piece the density collapses into an exponential
    // boundary layer at an edge.  The first panel spans at most a few nats
    // of that layer, so the 15-point rule resolves it and the sampled shift
    // lands within a nat or two of the true maximum.  Interior panels are
    // capped at half the noise scale, which resolves the Gaussian curvature.
    const double slope = std::max({std::abs(delta - piece.lo),
                                   std::abs(delta - piece.hi), sigma}) /
                         ctx.sigma2;
    const double cap_w = 0.5 * sigma / double(opts.panel_boost);
    double w0 = std::min(cap_w, 3.0 / (slope * double(opts.panel_boost)));
    w0 = std::max(w0, width * 1e-13);
    const double half = 0.5 * width;
    std::vector<double> bounds{0.0};
    for (double off : graded_offsets(w0, cap_w, half)) bounds.push_back(off);
    const auto upper_offs = graded_offsets(w0, cap_w, half);
    bounds.push_back(half);
    for (auto it = upper_offs.rbegin(); it != upper_offs.rend(); ++it)
      bounds.push_back(width - *it);
    bounds.push_back(width);
    std::vector<Panel> ps;
    ps.reserve(bounds.size());
    for (size_t i = 0; i + 1 < bounds.size(); ++i) {
      const double a = piece.lo + bounds[i];
      const double b = (i + 2 == bounds.size()) ? piece.hi
                                                : piece.lo + bounds[i + 1];
      if (!(b > a)) continue;
      ps.push_back({a, b});
      const double mid = 0.5 * (a + b);
      w.shift = std::max(w.shift, log_h(mid, delta, ctx));
      w.shift = std::max(w.shift, log_h(a, delta, ctx));
    }
    w.shift = std::max(w.shift, log_h(piece.hi, delta, ctx));
    w.panels.push_back(std::move(ps));
  }
  if (!std::isfinite(w.shift)) {
    throw DegenerateDensityError("log-density is -inf across the region");
  }
  return w;
}

// f(t) = pre(t) * exp(log_h(t) - shift) integrated by 15-point panels with
// recursive bisection wherever halves disagree.
class ShiftedIntegrator {
 public:
  ShiftedIntegrator(double delta, const CondDensityContext& ctx, double shift,
                    const QuadratureOptions& opts, bool weight_by_t)
      : delta_(delta), ctx_(ctx), shift_(shift), opts_(opts),
        weight_by_t_(weight_by_t) {}

  double integrate(const std::vector<Panel>& panels) const {
    if (panels.empty()) return 0.0;
    // First pass fixes the error budget from a coarse total.
    double coarse = 0.0;
    std::vector<double> first(panels.size());
    for (size_t i = 0; i < panels.size(); ++i) {
      first[i] = gl(panels[i].a, panels[i].b);
      coarse += std::abs(first[i]);
    }
    const double budget =
        opts_.rel_tol * std::max(coarse, 1e-300) / double(panels.size());
    double total = 0.0;
    for (size_t i = 0; i < panels.size(); ++i) {
      total += refine(panels[i].a, panels[i].b, first[i], budget, opts_.max_depth);
    }
    return total;
  }

 private:
  double eval(double t) const {
    const double lh = log_h(t, delta_, ctx_) - shift_;
    const double w = lh < -745.0 ? 0.0 : std::exp(lh);
    return weight_by_t_ ? t * w : w;
  }

  double gl(double a, double b) const {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (int g = 0; g < kGlPoints; ++g) {
      sum += kGlWeight[g] * eval(mid + half * kGlNode[g]);
    }
    return sum * half;
  }

  double refine(double a, double b, double whole, double eps, int depth) const {
    const double m = 0.5 * (a + b);
    const double left = gl(a, m);
    const double right = gl(m, b);
    if (depth <= 0 || std::abs(left + right - whole) <= eps) {
      return left + right;
    }
    return refine(a, m, left, 0.5 * eps, depth - 1) +
           refine(m, b, right, 0.5 * eps, depth - 1);
  }

  double delta_;
  const CondDensityContext& ctx_;
  double shift_;
  const QuadratureOptions& opts_;
  bool weight_by_t_;
};

}  // namespace

double survival_prob(double delta, const CondDensityContext& ctx,
                     double s_k_obs, const QuadratureOptions& opts) {
  if (!(s_k_obs >= 0.0)) throw InvalidInputError("observed value must be nonnegative");
  const Workspace w = prepare(delta, ctx, opts);
  const ShiftedIntegrator quad(delta, ctx, w.shift, opts, false);

  // Split the panel lists at the observed value so the below/above masses
  // and their sum come from one consistent decomposition.
  double below = 0.0, above = 0.0;
  for (size_t i = 0; i < w.pieces.size(); ++i) {
    const auto& piece = w.pieces[i];
    if (piece.hi <= s_k_obs) {
      below += quad.integrate(w.panels[i]);
    } else if (piece.lo >= s_k_obs) {
      above += quad.integrate(w.panels[i]);
    } else {
      std::vector<Panel> lo_part, hi_part;
      for (const auto& panel : w.panels[i]) {
        if (panel.b <= s_k_obs) {
          lo_part.push_back(panel);
        } else if (panel.a >= s_k_obs) {
          hi_part.push_back(panel);
        } else {
          lo_part.push_back({panel.a, s_k_obs});
          hi_part.push_back({s_k_obs, panel.b});
        }
      }
      below += quad.integrate(lo_part);
      above += quad.integrate(hi_part);
    }
  }
  const double total = below + above;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DegenerateDensityError("restricted density has no usable mass");
  }
  return std::clamp(above / total, 0.0, 1.0);
}

double conditional_mean(double delta, const CondDensityContext& ctx,
                        const QuadratureOptions& opts) {
  const Workspace w = prepare(delta, ctx, opts);
  const ShiftedIntegrator mass(delta, ctx, w.shift, opts, false);
  const ShiftedIntegrator moment(delta, ctx, w.shift, opts, true);
  double den = 0.0, num = 0.0;
  for (size_t i = 0; i < w.pieces.size(); ++i) {
    den += mass.integrate(w.panels[i]);
    num += moment.integrate(w.panels[i]);
  }
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw DegenerateDensityError("restricted density has no usable mass");
  }
  return num / den;
}

}  // namespace pve
