#pragma once

// Forward reachable sets as the 1-superlevel set of a polynomial w(x, y, k1, k2).
// Built by sampling the tracking model (plus plant braking runs), fitting w
// with one-sided least squares against positive and negative samples, then
// shifting it up until every cloud point has w >= 1. Audited afterwards.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rtd/common.hpp"
#include "rtd/error_function.hpp"
#include "rtd/geometry.hpp"
#include "rtd/reference.hpp"
#include "rtd/tracking_controller.hpp"
#include "rtd/vehicle_model.hpp"

namespace rtd {

using Exponent = std::array<int, 4>;  // powers of x, y, k1, k2

// All exponents of total degree <= degree, graded then lexicographic (x first).
inline std::vector<Exponent> monomials(int degree) {
  require(degree >= 0, "degree must be nonnegative");
  std::vector<Exponent> out;
  for (int d = 0; d <= degree; ++d)
    for (int a = d; a >= 0; --a)
      for (int b = d - a; b >= 0; --b)
        for (int c = d - a - b; c >= 0; --c) out.push_back({a, b, c, d - a - b - c});
  return out;
}

inline std::size_t monomial_count(int alpha) {
  // C(4 + 2 alpha, 4)
  const std::size_t n = 4 + 2 * static_cast<std::size_t>(alpha);
  return n * (n - 1) * (n - 2) * (n - 3) / 24;
}

// Invariant under (y, k1) -> (-y, -k1).
inline bool symmetric_exponent(const Exponent& e) { return (e[1] + e[2]) % 2 == 0; }

struct DomainBox {
  Interval x{0.0, 1.0};
  Interval y{-1.0, 1.0};
  [[nodiscard]] bool contains(const Vec2& z) const { return x.contains(z.x) && y.contains(z.y); }
  bool operator==(const DomainBox&) const = default;
};

struct FrsAudit {
  std::uint64_t seed = 0;
  bool external = false;
  std::size_t n_fit = 0;
  double fit_containment = 0.0;
  std::size_t n_holdout = 0;
  double holdout_containment = 0.0;
  std::size_t assumption4_trials = 0;
  std::size_t assumption4_violations = 0;
  double shift = 0.0;
  bool operator==(const FrsAudit&) const = default;
};

struct FrsPolynomial {
  int alpha = 4;
  std::vector<Exponent> exponents;
  std::vector<double> coeffs;  // over scaled coordinates, see scaled()
  double T = 0.0;
  double tau_plan = 0.5;
  double d_stop = 0.0;  // stopping distance from speed_range.hi
  Interval speed_range{};
  ParamBox param_box;
  ErrorFunction g_ref;
  DomainBox domain;
  FrsAudit audit;

  // Each coordinate mapped affinely to [-1, 1] over domain / param box.
  [[nodiscard]] std::array<double, 4> scaled(const Vec2& z, const TrajectoryParam& k) const {
    return {(z.x - domain.x.mid()) / (0.5 * domain.x.width()), (z.y - domain.y.mid()) / (0.5 * domain.y.width()),
            (k.k1 - param_box.k1.mid()) / (0.5 * param_box.k1.width()),
            (k.k2 - param_box.k2.mid()) / (0.5 * param_box.k2.width())};
  }

  [[nodiscard]] int degree() const { return 2 * alpha; }

  [[nodiscard]] double eval_scaled(const std::array<double, 4>& s) const {
    const int n = degree();
    std::array<std::array<double, 25>, 4> pw{};
    for (std::size_t v = 0; v < 4; ++v) {
      pw[v][0] = 1.0;
      for (int i = 1; i <= n; ++i) pw[v][static_cast<std::size_t>(i)] = pw[v][static_cast<std::size_t>(i - 1)] * s[v];
    }
    double w = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      if (coeffs[i] == 0.0) continue;
      const Exponent& e = exponents[i];
      w += coeffs[i] * pw[0][static_cast<std::size_t>(e[0])] * pw[1][static_cast<std::size_t>(e[1])] *
           pw[2][static_cast<std::size_t>(e[2])] * pw[3][static_cast<std::size_t>(e[3])];
    }
    return w;
  }

  [[nodiscard]] double eval(const Vec2& z, const TrajectoryParam& k) const { return eval_scaled(scaled(z, k)); }

  // Whether (z, k) lies where w was fitted; outside, w carries no meaning and
  // the point is outside the reachable set by construction.
  [[nodiscard]] bool in_domain(const Vec2& z, const TrajectoryParam& k) const {
    return domain.contains(z) && param_box.k1.contains(k.k1) && param_box.k2.contains(k.k2);
  }

  // w >= 1 and inside the domain.
  [[nodiscard]] bool reaches(const Vec2& z, const TrajectoryParam& k) const {
    return domain.contains(z) && eval(z, k) >= 1.0;
  }

  void validate() const {
    require(alpha >= 1 && alpha <= 12, "alpha out of range");
    require(exponents.size() == coeffs.size(), "monomial and coefficient counts differ");
    for (const auto& e : exponents) {
      require(e[0] >= 0 && e[1] >= 0 && e[2] >= 0 && e[3] >= 0, "negative exponent");
      require(e[0] + e[1] + e[2] + e[3] <= degree(), "monomial degree exceeds 2*alpha");
    }
    for (double c : coeffs) require(std::isfinite(c), "non-finite coefficient");
    param_box.validate();
    require(domain.x.width() > 0.0 && domain.y.width() > 0.0, "empty domain box");
    require(T > 0.0 && tau_plan > 0.0 && d_stop >= 0.0, "invalid horizon data");
    require(speed_range.hi > 0.0, "invalid speed range");
    // Trajectories must be long enough to stop within: T >= tau + D_stop / v.
    require(T + 1e-12 >= tau_plan + d_stop / speed_range.hi, "horizon too short for the stopping distance");
  }
};

// ---------------------------------------------------------------------------
// Constraint evaluation for many obstacle points at once. For fixed (x, y),
// w is a polynomial in (k1, k2) only; precomputing those coefficients turns
// each w(z_i, k) into a short dot product.

class KConstraints {
 public:
  KConstraints() = default;
  KConstraints(const FrsPolynomial& frs, const std::vector<Vec2>& points) : frs_(&frs) {
    std::map<std::pair<int, int>, int> index;
    for (const auto& e : frs.exponents) {
      const auto key = std::make_pair(e[2], e[3]);
      if (!index.count(key)) {
        index[key] = static_cast<int>(kexp_.size());
        kexp_.push_back({e[2], e[3]});
      }
    }
    col_.resize(frs.exponents.size());
    for (std::size_t i = 0; i < frs.exponents.size(); ++i)
      col_[i] = index[{frs.exponents[i][2], frs.exponents[i][3]}];
    const int n = frs.degree();
    std::vector<Vec2> kept;
    for (const auto& z : points)
      if (frs.domain.contains(z)) kept.push_back(z);
    points_ = kept;
    p_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(kexp_.size()));
    for (std::size_t r = 0; r < kept.size(); ++r) {
      const auto s = frs.scaled(kept[r], {frs.param_box.k1.mid(), frs.param_box.k2.mid()});
      std::array<double, 25> px{}, py{};
      px[0] = py[0] = 1.0;
      for (int i = 1; i <= n; ++i) {
        px[static_cast<std::size_t>(i)] = px[static_cast<std::size_t>(i - 1)] * s[0];
        py[static_cast<std::size_t>(i)] = py[static_cast<std::size_t>(i - 1)] * s[1];
      }
      for (std::size_t i = 0; i < frs.coeffs.size(); ++i) {
        const Exponent& e = frs.exponents[i];
        p_(static_cast<Eigen::Index>(r), col_[i]) +=
            frs.coeffs[i] * px[static_cast<std::size_t>(e[0])] * py[static_cast<std::size_t>(e[1])];
      }
    }
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] const std::vector<Vec2>& points() const { return points_; }

  [[nodiscard]] Eigen::VectorXd basis(const TrajectoryParam& k) const {
    const auto s = frs_->scaled({0.0, 0.0}, k);
    Eigen::VectorXd m(static_cast<Eigen::Index>(kexp_.size()));
    for (std::size_t j = 0; j < kexp_.size(); ++j)
      m(static_cast<Eigen::Index>(j)) = std::pow(s[2], kexp_[j][0]) * std::pow(s[3], kexp_[j][1]);
    return m;
  }

  // d basis / d k1 and d basis / d k2 (unscaled k).
  [[nodiscard]] std::pair<Eigen::VectorXd, Eigen::VectorXd> basis_gradient(const TrajectoryParam& k) const {
    const auto s = frs_->scaled({0.0, 0.0}, k);
    const double h1 = 0.5 * frs_->param_box.k1.width();
    const double h2 = 0.5 * frs_->param_box.k2.width();
    Eigen::VectorXd d1(static_cast<Eigen::Index>(kexp_.size())), d2(static_cast<Eigen::Index>(kexp_.size()));
    for (std::size_t j = 0; j < kexp_.size(); ++j) {
      const int c = kexp_[j][0], e = kexp_[j][1];
      d1(static_cast<Eigen::Index>(j)) = c == 0 ? 0.0 : c * std::pow(s[2], c - 1) * std::pow(s[3], e) / h1;
      d2(static_cast<Eigen::Index>(j)) = e == 0 ? 0.0 : e * std::pow(s[2], c) * std::pow(s[3], e - 1) / h2;
    }
    return {d1, d2};
  }

  [[nodiscard]] Eigen::VectorXd values(const TrajectoryParam& k) const { return p_ * basis(k); }

  [[nodiscard]] double max_value(const TrajectoryParam& k) const {
    if (points_.empty()) return -std::numeric_limits<double>::infinity();
    return values(k).maxCoeff();
  }

  // True as soon as one point has w > threshold (early exit).
  [[nodiscard]] bool any_above(const TrajectoryParam& k, double threshold) const {
    const Eigen::VectorXd m = basis(k);
    for (Eigen::Index r = 0; r < p_.rows(); ++r)
      if (p_.row(r).dot(m) > threshold) return true;
    return false;
  }

  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return p_; }

 private:
  const FrsPolynomial* frs_ = nullptr;
  std::vector<std::array<int, 2>> kexp_;
  std::vector<Eigen::Index> col_;
  std::vector<Vec2> points_;
  Eigen::MatrixXd p_;
};

// ---------------------------------------------------------------------------
// Projections.

// k is unsafe when some obstacle point is reachable under k.
inline bool k_unsafe(const FrsPolynomial& frs, const std::vector<Vec2>& points, const TrajectoryParam& k) {
  for (const auto& z : points)
    if (frs.reaches(z, k)) return true;
  return false;
}

struct KMask {
  std::vector<double> k1, k2;     // grid values
  std::vector<std::uint8_t> bad;  // row-major, k1 fastest
  [[nodiscard]] bool at(std::size_t i1, std::size_t i2) const { return bad[i2 * k1.size() + i1] != 0; }
  [[nodiscard]] std::size_t count() const { return static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1)); }
};

inline KMask project_K(const FrsPolynomial& frs, const std::vector<Vec2>& points, std::size_t n1 = 101,
                       std::size_t n2 = 101) {
  require(n1 >= 2 && n2 >= 2, "mask needs at least 2x2 cells");
  KMask m;
  for (std::size_t i = 0; i < n1; ++i)
    m.k1.push_back(frs.param_box.k1.lo + frs.param_box.k1.width() * static_cast<double>(i) / static_cast<double>(n1 - 1));
  for (std::size_t i = 0; i < n2; ++i)
    m.k2.push_back(frs.param_box.k2.lo + frs.param_box.k2.width() * static_cast<double>(i) / static_cast<double>(n2 - 1));
  m.bad.assign(n1 * n2, 0);
  if (points.empty()) return m;
  const KConstraints kc(frs, points);
  if (kc.size() == 0) return m;
  for (std::size_t i2 = 0; i2 < n2; ++i2)
    for (std::size_t i1 = 0; i1 < n1; ++i1)
      m.bad[i2 * n1 + i1] = kc.max_value({m.k1[i1], m.k2[i2]}) >= 1.0 ? 1 : 0;
  return m;
}

struct Contour {
  std::vector<std::array<Vec2, 2>> segments;
  double cell = 0.0;
  std::size_t inside_cells = 0;  // grid nodes with w >= 1
  [[nodiscard]] double area() const { return static_cast<double>(inside_cells) * cell * cell; }
  [[nodiscard]] bool empty() const { return segments.empty(); }
};

// Marching squares on the w = 1 level over the domain box.
inline Contour project_X(const FrsPolynomial& frs, const TrajectoryParam& k, double resolution = 0.2) {
  require(resolution > 0.0, "resolution must be positive");
  Contour c;
  c.cell = resolution;
  const auto nx = static_cast<std::size_t>(std::ceil(frs.domain.x.width() / resolution)) + 1;
  const auto ny = static_cast<std::size_t>(std::ceil(frs.domain.y.width() / resolution)) + 1;
  auto px = [&](std::size_t i) { return frs.domain.x.lo + resolution * static_cast<double>(i); };
  auto py = [&](std::size_t j) { return frs.domain.y.lo + resolution * static_cast<double>(j); };
  std::vector<double> w(nx * ny);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const Vec2 z{px(i), py(j)};
      // Nodes past the box edge count as outside so contours close.
      w[j * nx + i] = frs.domain.contains(z) ? frs.eval(z, k) : -1.0;
      if (w[j * nx + i] >= 1.0) ++c.inside_cells;
    }
  // Bisection on w along the edge; nodes outside the box keep the box edge.
  auto value = [&](const Vec2& z) { return frs.domain.contains(z) ? frs.eval(z, k) : -1.0; };
  auto cross_at = [&](const Vec2& a, const Vec2& b, double wa, double) {
    double lo = 0.0, hi = 1.0;
    const bool a_in = wa >= 1.0;
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((value(a + (b - a) * mid) >= 1.0) == a_in) lo = mid;
      else hi = mid;
    }
    return a + (b - a) * (0.5 * (lo + hi));
  };
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const Vec2 p[4] = {{px(i), py(j)}, {px(i + 1), py(j)}, {px(i + 1), py(j + 1)}, {px(i), py(j + 1)}};
      const double v[4] = {w[j * nx + i], w[j * nx + i + 1], w[(j + 1) * nx + i + 1], w[(j + 1) * nx + i]};
      std::vector<Vec2> hits;
      for (int e = 0; e < 4; ++e) {
        const int f = (e + 1) % 4;
        if ((v[e] >= 1.0) != (v[f] >= 1.0)) hits.push_back(cross_at(p[e], p[f], v[e], v[f]));
      }
      if (hits.size() == 2) {
        c.segments.push_back({hits[0], hits[1]});
      } else if (hits.size() == 4) {
        // saddle: resolve with the center value
        const double center = 0.25 * (v[0] + v[1] + v[2] + v[3]);
        if ((center >= 1.0) == (v[0] >= 1.0)) {
          c.segments.push_back({hits[0], hits[1]});
          c.segments.push_back({hits[2], hits[3]});
        } else {
          c.segments.push_back({hits[0], hits[3]});
          c.segments.push_back({hits[1], hits[2]});
        }
      }
    }
  return c;
}

// ---------------------------------------------------------------------------
// Library of speed-range FRSes.

struct FrsLibrary {
  std::vector<FrsPolynomial> entries;  // ascending speed ranges

  void validate(const Interval& band = {3.0, 15.0}) const {
    require(!entries.empty(), "empty FRS library");
    require(std::abs(entries.front().speed_range.lo - band.lo) < 1e-9, "library does not start at the band floor");
    require(std::abs(entries.back().speed_range.hi - band.hi) < 1e-9, "library does not reach the band ceiling");
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].validate();
      require(entries[i].param_box.k2 == entries[i].speed_range, "k2 interval must equal the speed range");
      if (i > 0) require(std::abs(entries[i].speed_range.lo - entries[i - 1].speed_range.hi) < 1e-9, "gap in library");
    }
  }
};

struct FrsSelection {
  std::size_t index = 0;
  bool clamped = false;  // speed above every band: top range used
};

inline FrsSelection select_frs(const FrsLibrary& lib, double speed, double yaw_rate) {
  require(!lib.entries.empty(), "empty FRS library");
  FrsSelection sel;
  const auto& top = lib.entries.back();
  if (speed > top.speed_range.hi + top.param_box.dk2_limit) {
    sel.index = lib.entries.size() - 1;
    sel.clamped = true;
    return sel;
  }
  for (std::size_t i = lib.entries.size(); i-- > 0;) {
    const auto& f = lib.entries[i];
    const bool speed_ok = speed >= f.speed_range.lo - f.param_box.dk2_limit && speed <= f.speed_range.hi + f.param_box.dk2_limit;
    if (speed_ok && std::abs(yaw_rate) <= f.param_box.k1_limit) {
      sel.index = i;
      return sel;
    }
  }
  sel.index = 0;
  return sel;
}

// ---------------------------------------------------------------------------
// Sampling.

enum class CloudSource : std::uint8_t { Tracking = 0, Envelope = 1, Braking = 2 };

struct CloudPoint {
  double x, y, k1, k2;
  CloudSource source;
};

struct ReachSampleCloud {
  std::vector<CloudPoint> points;
  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] bool empty() const { return points.empty(); }
};

// Plan-start footprint points: center first, then corners, then edge midpoints.
inline std::vector<Vec2> initial_body_points(const VehicleParams& p, std::size_t n) {
  const auto c = footprint_offsets(p);
  std::vector<Vec2> all = {{0.0, 0.0}, c[0], c[1], c[2], c[3]};
  for (std::size_t i = 0; i < 4; ++i) all.push_back((c[i] + c[(i + 1) % 4]) * 0.5);
  require(n >= 1 && n <= all.size(), "n_z0 must be in [1, 9]");
  all.resize(n);
  return all;
}

// n_k parameters on a k1 x k2 grid including the box corners.
inline std::vector<TrajectoryParam> k_grid(const ParamBox& box, std::size_t n_k) {
  require(n_k > 0, "n_k must be positive");
  if (n_k == 1) return {{box.k1.mid(), box.k2.mid()}};
  const std::size_t n2 = std::max<std::size_t>(2, static_cast<std::size_t>(std::sqrt(static_cast<double>(n_k)) / 2.0));
  const std::size_t n1 = std::max<std::size_t>(2, n_k / n2);
  std::vector<TrajectoryParam> out;
  for (std::size_t j = 0; j < n2; ++j)
    for (std::size_t i = 0; i < n1; ++i)
      // written as mid + half*(2u - 1) so mirrored grid values are exact negatives
      out.push_back({box.k1.mid() + 0.5 * box.k1.width() * (2.0 * static_cast<double>(i) / static_cast<double>(n1 - 1) - 1.0),
                     box.k2.lo + box.k2.width() * static_cast<double>(j) / static_cast<double>(n2 - 1)});
  return out;
}

inline std::vector<DisturbanceSignal> disturbance_set(std::size_t n_d, double T, Rng& rng, double switch_dt = 0.05) {
  std::vector<DisturbanceSignal> out;
  const Vec2 corners[4] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (std::size_t i = 0; i < n_d; ++i)
    out.push_back(i < 4 ? DisturbanceSignal::constant(corners[i], T, switch_dt)
                        : DisturbanceSignal::bang_bang(rng, T, switch_dt));
  return out;
}

struct CloudOptions {
  double tau_plan = 0.5;
  double dt = 0.01;
  std::size_t emit_every = 5;      // tracking-model steps between emitted points
  bool include_braking = true;
  std::size_t braking_runs = 4;    // plant braking rollouts per k
  std::size_t braking_emit_every = 2;
  bool mirror = true;
};

namespace detail {

// Plant tracks k until tau_plan, then the braking reference, until stopped.
// Calls visit(t, state) at every step.
template <typename F>
void braking_run(const PlanStart& ps, double tau_plan, const ErrorModel& em, F&& visit, bool brake = true,
                 double horizon = 0.0) {
  const LqTracker& tr = *em.tracker;
  const ReferenceTrajectory ref = brake ? braking_reference(ps.k, tau_plan, ps.estimate, em.nominal, em.braking)
                                        : k_reference(ps.k, ps.estimate, horizon + em.dt, em.nominal, em.dt);
  const double limit = brake ? ref.duration() + 5.0 : horizon;
  PlantState s = ps.plant;
  double t = 0.0;
  visit(t, s.vehicle);
  const auto max_steps = static_cast<std::size_t>(std::ceil(limit / em.dt));
  for (std::size_t i = 0; i < max_steps; ++i) {
    if (brake && t > tau_plan && s.vehicle.vx < 0.1) break;
    const ControlInput u = tr.command(s.vehicle, ref, t);
    s = plant_step(s, u, ps.plant_params, tr.actuators(), em.dt);
    t = static_cast<double>(i + 1) * em.dt;
    visit(t, s.vehicle);
  }
}

// Half-widths of the worst-case error box of the tracking model at time t:
// e(t) = int R(k1 (t - s)) diag(g_x, g_y)(s) d(s) ds with |d| <= 1.
inline Vec2 error_box(const ErrorFunction& g, double k1, double t, std::size_t n = 64) {
  if (t <= 0.0) return {0.0, 0.0};
  double hx = 0.0, hy = 0.0;
  const double h = t / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    // midpoint rule, then a small relative pad for the quadrature error
    const double s = (static_cast<double>(i) + 0.5) * h;
    const double c = std::abs(std::cos(k1 * (t - s)));
    const double sn = std::abs(std::sin(k1 * (t - s)));
    const double gx = std::max(0.0, g.rate_x(s));
    const double gy = std::max(0.0, g.rate_y(s));
    hx += h * (gx * c + gy * sn);
    hy += h * (gx * sn + gy * c);
  }
  return {hx * 1.01, hy * 1.01};
}

}  // namespace detail

// Tracking-model samples for the given parameters.
inline ReachSampleCloud sample_reachable_cloud(const std::vector<TrajectoryParam>& ks, const ErrorFunction& g,
                                               std::size_t n_z0, std::size_t n_d, std::uint64_t seed,
                                               const ErrorModel& em, const CloudOptions& opt = {}) {
  require(!ks.empty() && n_z0 > 0 && n_d > 0, "cloud sample counts must be positive");
  require(g.T > 0.0, "error function has no horizon");
  const double T = g.T;
  const auto z0s = initial_body_points(em.nominal, n_z0);
  const auto steps = static_cast<std::size_t>(std::floor(T / opt.dt + 1e-9));
  std::vector<std::vector<CloudPoint>> per_k(ks.size());
  parallel_for(ks.size(), [&](std::size_t ik) {
    const TrajectoryParam& k = ks[ik];
    Rng rng(split_seed(seed, ik));
    const auto ds = disturbance_set(n_d, T, rng);
    auto& out = per_k[ik];
    for (const auto& z0 : z0s)
      for (const auto& d : ds) {
        Vec2 z = z0;
        out.push_back({z.x, z.y, k.k1, k.k2, CloudSource::Tracking});
        for (std::size_t i = 0; i < steps; ++i) {
          z = tracking_model_step(z, k, d, g, static_cast<double>(i) * opt.dt, opt.dt, {0.0, 0.0}, em.nominal);
          if ((i + 1) % opt.emit_every == 0 || i + 1 == steps) out.push_back({z.x, z.y, k.k1, k.k2, CloudSource::Tracking});
        }
      }
    if (opt.include_braking && em.tracker != nullptr) {
      for (std::size_t r = 0; r < opt.braking_runs; ++r) {
        Rng brng(split_seed(split_seed(seed, 0xB4A3ULL), ik * 1000 + r));
        const PlanStart ps = detail::draw_plan_start(g.speed_range, em, brng, k);
        std::size_t step = 0;
        detail::braking_run(ps, opt.tau_plan, em, [&](double, const VehicleState& s) {
          if (step++ % opt.braking_emit_every != 0) return;
          for (const auto& c : footprint_polygon(s, em.nominal)) out.push_back({c.x, c.y, k.k1, k.k2, CloudSource::Braking});
        });
      }
    }
  });
  ReachSampleCloud cloud;
  for (auto& v : per_k) cloud.points.insert(cloud.points.end(), v.begin(), v.end());
  if (opt.mirror) {
    const std::size_t n = cloud.points.size();
    cloud.points.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      CloudPoint p = cloud.points[i];
      p.y = -p.y;
      p.k1 = -p.k1;
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

inline ReachSampleCloud sample_reachable_cloud(const ParamBox& box, const ErrorFunction& g, std::size_t n_k,
                                               std::size_t n_z0, std::size_t n_d, std::uint64_t seed,
                                               const ErrorModel& em, const CloudOptions& opt = {}) {
  require(n_k > 0, "cloud sample counts must be positive");
  return sample_reachable_cloud(k_grid(box, n_k), g, n_z0, n_d, seed, em, opt);
}

// Grid cells (spacing h) covered by the desired footprint grown by the error
// box, swept over [0, T]. Emitted as Envelope points.
inline void append_envelope(ReachSampleCloud& cloud, const std::vector<TrajectoryParam>& ks, const ErrorFunction& g,
                            const VehicleParams& p, double h, double dt = 0.02) {
  const auto corners = footprint_offsets(p);
  std::vector<std::vector<CloudPoint>> per_k(ks.size());
  parallel_for(ks.size(), [&](std::size_t ik) {
    const TrajectoryParam& k = ks[ik];
    std::map<std::pair<long, long>, bool> cells;
    const auto n = static_cast<std::size_t>(std::ceil(g.T / dt));
    for (std::size_t i = 0; i <= n; ++i) {
      const double t = std::min(g.T, static_cast<double>(i) * dt);
      Polygon fp;
      for (const auto& c : corners) fp.push_back(desired_point(k, c, {0.0, 0.0}, t, p));
      const Vec2 box = detail::error_box(g, k.k1, t);
      const Polygon poly = expand_by_box(convex_hull(fp), box.x, box.y);
      double x0 = poly[0].x, x1 = poly[0].x, y0 = poly[0].y, y1 = poly[0].y;
      for (const auto& v : poly) {
        x0 = std::min(x0, v.x);
        x1 = std::max(x1, v.x);
        y0 = std::min(y0, v.y);
        y1 = std::max(y1, v.y);
      }
      for (long ix = static_cast<long>(std::floor(x0 / h)); ix <= static_cast<long>(std::ceil(x1 / h)); ++ix)
        for (long iy = static_cast<long>(std::floor(y0 / h)); iy <= static_cast<long>(std::ceil(y1 / h)); ++iy) {
          const Vec2 q{static_cast<double>(ix) * h, static_cast<double>(iy) * h};
          if (point_in_convex(poly, q)) cells[{ix, iy}] = true;
        }
    }
    for (const auto& [key, unused] : cells)
      per_k[ik].push_back({static_cast<double>(key.first) * h, static_cast<double>(key.second) * h, k.k1, k.k2,
                           CloudSource::Envelope});
  });
  for (auto& v : per_k) cloud.points.insert(cloud.points.end(), v.begin(), v.end());
}

// ---------------------------------------------------------------------------
// Fitting.

struct FitConfig {
  int alpha = 4;
  double r_inflate = 0.3;
  double raster = 0.25;        // grid spacing for dilation and negatives
  double negative_ratio = 5.0;
  double delta = 0.1;          // targets 1 + delta (inside) and 1 - delta (outside)
  double domain_margin = 1.0;
  std::size_t iterations = 40;  // one-sided target updates
  double ridge = 1e-9;
};

struct FitReport {
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::size_t n_slices = 0;
  double fit_containment = 0.0;
  double shift = 0.0;
  double negative_rejection = 0.0;  // fraction of negatives with w < 1 after the shift
};

namespace detail {

struct Sample4 {
  double x, y, k1, k2;
  bool positive;
};

inline std::vector<Exponent> symmetric_monomials(int degree) {
  std::vector<Exponent> out;
  for (const auto& e : monomials(degree))
    if (symmetric_exponent(e)) out.push_back(e);
  return out;
}

inline void features(const std::vector<Exponent>& basis, const std::array<double, 4>& s, int degree, double* out) {
  std::array<std::array<double, 25>, 4> pw{};
  for (std::size_t v = 0; v < 4; ++v) {
    pw[v][0] = 1.0;
    for (int i = 1; i <= degree; ++i) pw[v][static_cast<std::size_t>(i)] = pw[v][static_cast<std::size_t>(i - 1)] * s[v];
  }
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const Exponent& e = basis[j];
    out[j] = pw[0][static_cast<std::size_t>(e[0])] * pw[1][static_cast<std::size_t>(e[1])] *
             pw[2][static_cast<std::size_t>(e[2])] * pw[3][static_cast<std::size_t>(e[3])];
  }
}

}  // namespace detail

// Frame of the FRS being fitted: parameter box and horizon.
struct FrsFrame {
  Interval speed_range;
  ParamBox param_box;
  double T = 0.0;
};

inline FrsPolynomial fit_w(const ReachSampleCloud& cloud, const FrsFrame& frame, std::uint64_t seed,
                           const FitConfig& cfg = {}, FitReport* report = nullptr) {
  require(!cloud.empty(), "empty reach cloud");
  require(cfg.alpha >= 1, "alpha must be at least 1");
  require(cfg.r_inflate >= 0.0 && cfg.raster > 0.0 && cfg.negative_ratio >= 0.0, "invalid fit settings");
  const double h = cfg.raster;
  const int degree = 2 * cfg.alpha;

  FrsPolynomial w;
  w.alpha = cfg.alpha;
  w.speed_range = frame.speed_range;
  w.param_box = frame.param_box;
  w.T = frame.T;
  w.exponents = monomials(degree);
  w.coeffs.assign(w.exponents.size(), 0.0);

  // Slices of equal k; dilation is done per slice on a grid.
  std::map<std::pair<double, double>, std::vector<std::size_t>> slices;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    require(std::isfinite(p.x) && std::isfinite(p.y), "non-finite cloud point");
    slices[{p.k1, p.k2}].push_back(i);
  }
  const long rad = static_cast<long>(std::ceil(cfg.r_inflate / h));
  std::vector<std::map<std::pair<long, long>, bool>> occupied(slices.size());
  std::vector<std::pair<double, double>> slice_k;
  double xmin = 0.0, xmax = 0.0, ymax = 0.0;
  bool first = true;
  {
    std::size_t si = 0;
    for (const auto& [k, idx] : slices) {
      slice_k.push_back(k);
      auto& occ = occupied[si++];
      for (std::size_t i : idx) {
        const auto& p = cloud.points[i];
        const long cx = std::lround(p.x / h), cy = std::lround(p.y / h);
        for (long dx = -rad - 1; dx <= rad + 1; ++dx)
          for (long dy = -rad - 1; dy <= rad + 1; ++dy) {
            const double qx = static_cast<double>(cx + dx) * h, qy = static_cast<double>(cy + dy) * h;
            if (std::hypot(qx - p.x, qy - p.y) <= cfg.r_inflate || (dx == 0 && dy == 0)) occ[{cx + dx, cy + dy}] = true;
          }
        if (first) {
          xmin = xmax = p.x;
          first = false;
        }
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymax = std::max(ymax, std::abs(p.y));
      }
    }
  }
  const double pad = cfg.r_inflate + cfg.domain_margin;
  w.domain.x = {xmin - pad, xmax + pad};
  w.domain.y = {-(ymax + pad), ymax + pad};

  // Training samples.
  std::vector<detail::Sample4> train;
  Rng rng(split_seed(seed, 0x5EEDULL));
  for (std::size_t si = 0; si < slice_k.size(); ++si) {
    const auto [k1, k2] = slice_k[si];
    std::size_t npos = 0;
    for (const auto& [cell, unused] : occupied[si]) {
      train.push_back({static_cast<double>(cell.first) * h, static_cast<double>(cell.second) * h, k1, k2, true});
      ++npos;
    }
    const auto nneg = static_cast<std::size_t>(std::llround(cfg.negative_ratio * static_cast<double>(npos)));
    std::size_t got = 0;
    for (std::size_t tries = 0; got < nneg && tries < 50 * nneg + 100; ++tries) {
      const double x = rng.uniform(w.domain.x), y = rng.uniform(w.domain.y);
      const long cx = std::lround(x / h), cy = std::lround(y / h);
      bool near = false;
      // one-cell guard band around the dilated set
      for (long dx = -1; dx <= 1 && !near; ++dx)
        for (long dy = -1; dy <= 1 && !near; ++dy) near = occupied[si].count({cx + dx, cy + dy}) > 0;
      if (near) continue;
      train.push_back({x, y, k1, k2, false});
      ++got;
    }
  }
  const std::size_t n_pos = static_cast<std::size_t>(std::count_if(train.begin(), train.end(), [](const auto& s) { return s.positive; }));

  const auto basis = detail::symmetric_monomials(degree);
  const auto nb = static_cast<Eigen::Index>(basis.size());
  auto feat_row = [&](const detail::Sample4& s, double* out) {
    detail::features(basis, w.scaled({s.x, s.y}, {s.k1, s.k2}), degree, out);
  };

  // Normal matrix, accumulated in blocks.
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nb, nb);
  const Eigen::Index block = 4096;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> fb(block, nb);
  for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(block)) {
    const std::size_t end = std::min(train.size(), start + static_cast<std::size_t>(block));
    const auto rows = static_cast<Eigen::Index>(end - start);
    for (std::size_t i = start; i < end; ++i) feat_row(train[i], fb.row(static_cast<Eigen::Index>(i - start)).data());
    ata.selfadjointView<Eigen::Lower>().rankUpdate(fb.topRows(rows).transpose());
  }
  ata = ata.selfadjointView<Eigen::Lower>();
  const double scale = ata.diagonal().maxCoeff();
  ata.diagonal().array() += cfg.ridge * scale;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
  require(ldlt.info() == Eigen::Success, "FRS normal equations are singular");

  std::vector<double> target(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) target[i] = train[i].positive ? 1.0 + cfg.delta : 1.0 - cfg.delta;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(nb);
  std::vector<double> row(static_cast<std::size_t>(nb));
  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    Eigen::VectorXd atb = Eigen::VectorXd::Zero(nb);
    for (std::size_t i = 0; i < train.size(); ++i) {
      feat_row(train[i], row.data());
      const Eigen::Map<const Eigen::VectorXd> f(row.data(), nb);
      if (it > 0) {
        // Points already on the right side of their target stop pulling.
        const double v = f.dot(coef);
        target[i] = train[i].positive ? std::max(1.0 + cfg.delta, v) : std::min(1.0 - cfg.delta, v);
      }
      atb += target[i] * f;
    }
    coef = ldlt.solve(atb);
  }
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const auto pos = std::find(w.exponents.begin(), w.exponents.end(), basis[j]) - w.exponents.begin();
    w.coeffs[static_cast<std::size_t>(pos)] = coef(static_cast<Eigen::Index>(j));
  }

  // Uniform shift so every cloud point has w >= 1.
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& p : cloud.points) lowest = std::min(lowest, w.eval({p.x, p.y}, {p.k1, p.k2}));
  const double shift = std::max(0.0, 1.0 - lowest);
  const std::size_t const_idx = 0;  // exponent (0,0,0,0) comes first
  w.coeffs[const_idx] += shift;
  for (int guard = 0; guard < 8; ++guard) {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& p : cloud.points) lo = std::min(lo, w.eval({p.x, p.y}, {p.k1, p.k2}));
    if (lo >= 1.0) break;
    w.coeffs[const_idx] += (1.0 - lo) + 1e-12;
  }

  std::size_t inside = 0;
  for (const auto& p : cloud.points)
    if (w.eval({p.x, p.y}, {p.k1, p.k2}) >= 1.0) ++inside;
  w.audit.seed = seed;
  w.audit.n_fit = cloud.points.size();
  w.audit.fit_containment = static_cast<double>(inside) / static_cast<double>(cloud.points.size());
  w.audit.shift = w.coeffs[const_idx] - coef(0);
  if (report) {
    report->n_positive = n_pos;
    report->n_negative = train.size() - n_pos;
    report->n_slices = slice_k.size();
    report->fit_containment = w.audit.fit_containment;
    report->shift = w.audit.shift;
    std::size_t rejected = 0;
    for (const auto& s : train)
      if (!s.positive && w.eval({s.x, s.y}, {s.k1, s.k2}) < 1.0) ++rejected;
    report->negative_rejection =
        report->n_negative ? static_cast<double>(rejected) / static_cast<double>(report->n_negative) : 1.0;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Audits.

// Fresh tracking-model rollouts with random k, start point and disturbance;
// one random time sample per rollout, mirrored copies included.
inline ReachSampleCloud holdout_cloud(const FrsPolynomial& frs, const ErrorFunction& g, std::size_t n_rollouts,
                                      std::uint64_t seed, const VehicleParams& p, double dt = 0.01) {
  ReachSampleCloud cloud;
  cloud.points.resize(n_rollouts);
  const auto corners = footprint_offsets(p);
  const auto steps = static_cast<std::size_t>(std::floor(g.T / dt + 1e-9));
  parallel_for(n_rollouts, [&](std::size_t r) {
    Rng rng(split_seed(seed, r));
    const TrajectoryParam k{rng.uniform(frs.param_box.k1), rng.uniform(frs.param_box.k2)};
    // uniform point of the footprint rectangle
    const double u = rng.uniform(), v = rng.uniform();
    const Vec2 z0 = corners[0] + (corners[1] - corners[0]) * u + (corners[3] - corners[0]) * v;
    const DisturbanceSignal d = rng.coin() ? DisturbanceSignal::bang_bang(rng, g.T) : DisturbanceSignal::uniform(rng, g.T);
    const std::size_t stop = rng.index(steps + 1);
    Vec2 z = z0;
    for (std::size_t i = 0; i < stop; ++i) z = tracking_model_step(z, k, d, g, static_cast<double>(i) * dt, dt, {0.0, 0.0}, p);
    const bool mirror = rng.coin();
    cloud.points[r] = {z.x, mirror ? -z.y : z.y, mirror ? -k.k1 : k.k1, k.k2, CloudSource::Tracking};
  });
  return cloud;
}

inline double containment(const FrsPolynomial& frs, const ReachSampleCloud& cloud) {
  if (cloud.empty()) return 1.0;
  std::size_t in = 0;
  for (const auto& p : cloud.points)
    if (frs.reaches({p.x, p.y}, {p.k1, p.k2})) ++in;
  return static_cast<double>(in) / static_cast<double>(cloud.size());
}

struct Assumption4Report {
  std::size_t trials = 0;
  std::size_t violating_trials = 0;
  std::size_t violating_points = 0;
  std::size_t checked_points = 0;
  double worst_w = std::numeric_limits<double>::infinity();  // min w seen
  [[nodiscard]] double violation_fraction() const {
    return trials ? static_cast<double>(violating_trials) / static_cast<double>(trials) : 0.0;
  }
};

struct Assumption4Options {
  bool include_braking = true;  // false: check only [0, tau_plan]
  double coeff_shift = 0.0;     // added to the constant term (negative control)
  double dk1_limit = -1.0;      // < 0: use the error model's value
};

// Plant rollouts: track a random k until tau_plan, then brake to a stop.
// Every footprint vertex at every step must satisfy w >= 1.
inline Assumption4Report audit_assumption4(const FrsPolynomial& frs, std::size_t n_trials, std::uint64_t seed,
                                           const ErrorModel& em, const Assumption4Options& opt = {}) {
  em.validate();
  FrsPolynomial f = frs;
  f.coeffs[0] += opt.coeff_shift;
  ErrorModel model = em;
  if (opt.dk1_limit >= 0.0) model.dk1_limit = opt.dk1_limit;
  std::vector<Assumption4Report> per(n_trials);
  parallel_for(n_trials, [&](std::size_t r) {
    Rng rng(split_seed(seed, r));
    const PlanStart ps = detail::draw_plan_start(frs.speed_range, model, rng);
    auto& rep = per[r];
    bool bad = false;
    detail::braking_run(
        ps, frs.tau_plan, model,
        [&](double, const VehicleState& s) {
          for (const auto& c : footprint_polygon(s, model.nominal)) {
            ++rep.checked_points;
            const double v = f.domain.contains(c) ? f.eval(c, ps.k) : -std::numeric_limits<double>::infinity();
            rep.worst_w = std::min(rep.worst_w, v);
            if (v < 1.0) {
              ++rep.violating_points;
              bad = true;
            }
          }
        },
        opt.include_braking, frs.tau_plan);
    rep.trials = 1;
    rep.violating_trials = bad ? 1 : 0;
  });
  Assumption4Report out;
  for (const auto& r : per) {
    out.trials += r.trials;
    out.violating_trials += r.violating_trials;
    out.violating_points += r.violating_points;
    out.checked_points += r.checked_points;
    out.worst_w = std::min(out.worst_w, r.worst_w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// End-to-end build of one library entry.

struct FrsBuildConfig {
  FitConfig fit;
  CloudOptions cloud;
  std::size_t n_k = 105;
  std::size_t n_z0 = 9;
  std::size_t n_d = 8;
  double envelope_dt = 0.02;
  std::size_t n_holdout = 10000;
  double holdout_threshold = 0.999;
  std::size_t assumption4_trials = 200;
};

struct FrsBuildReport {
  FitReport fit;
  std::size_t cloud_points = 0;
  double holdout = 0.0;
  Assumption4Report assumption4;
  [[nodiscard]] bool passed(double threshold) const {
    return fit.fit_containment >= 1.0 && holdout >= threshold && assumption4.violating_trials == 0;
  }
};

inline FrsPolynomial build_frs(const ErrorFunction& g, double d_stop, std::uint64_t seed, const ErrorModel& em,
                               const FrsBuildConfig& cfg = {}, FrsBuildReport* report = nullptr) {
  require(g.T > 0.0, "error function has no horizon");
  FrsFrame frame;
  frame.speed_range = g.speed_range;
  frame.T = g.T;
  frame.param_box.k1 = {-em.k1_limit, em.k1_limit};
  frame.param_box.k2 = g.speed_range;
  frame.param_box.dk2_limit = em.dk2_limit;
  frame.param_box.k1_limit = em.k1_limit;
  const auto ks = k_grid(frame.param_box, cfg.n_k);
  ReachSampleCloud cloud = sample_reachable_cloud(ks, g, cfg.n_z0, cfg.n_d, split_seed(seed, 1), em, cfg.cloud);
  append_envelope(cloud, ks, g, em.nominal, cfg.fit.raster, cfg.envelope_dt);
  FitReport fr;
  FrsPolynomial w = fit_w(cloud, frame, split_seed(seed, 2), cfg.fit, &fr);
  w.tau_plan = cfg.cloud.tau_plan;
  w.d_stop = d_stop;
  w.g_ref = g;
  const ReachSampleCloud hold = holdout_cloud(w, g, cfg.n_holdout, split_seed(seed, 3), em.nominal);
  w.audit.n_holdout = hold.size();
  w.audit.holdout_containment = containment(w, hold);
  const Assumption4Report a4 = audit_assumption4(w, cfg.assumption4_trials, split_seed(seed, 4), em);
  w.audit.assumption4_trials = a4.trials;
  w.audit.assumption4_violations = a4.violating_trials;
  w.validate();
  if (report) {
    report->fit = fr;
    report->cloud_points = cloud.size();
    report->holdout = w.audit.holdout_containment;
    report->assumption4 = a4;
  }
  return w;
}

}  // namespace rtd
