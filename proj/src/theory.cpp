#include "asofed/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace asofed {
namespace {

constexpr std::uint64_t kTheoryTag = 0x3c9f27d4a1e85b06ull;

struct EntryRef {
  int layer;
  Eigen::Index row;
  Eigen::Index col;
};

std::vector<EntryRef> entry_order(const ParamSet& p) {
  std::vector<EntryRef> order;
  order.reserve(p.value_count());
  for (int l = 0; l < p.layer_count(); ++l) {
    const Eigen::MatrixXd& m = p.layer(l);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) order.push_back({l, r, c});
    }
  }
  return order;
}

Eigen::MatrixXd fd_hessian(const LocalFn& fn, const ParamSet& w0, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("fd_hessian: step must be > 0");
  const std::vector<EntryRef> order = entry_order(w0);
  const Eigen::Index n = static_cast<Eigen::Index>(order.size());
  Eigen::MatrixXd hess(n, n);
  ParamSet wp = w0;
  ParamSet wm = w0;
  for (Eigen::Index e = 0; e < n; ++e) {
    const EntryRef& ref = order[e];
    wp.layer(ref.layer)(ref.row, ref.col) += step;
    wm.layer(ref.layer)(ref.row, ref.col) -= step;
    hess.col(e) = (flatten(fn.grad(wp)) - flatten(fn.grad(wm))) / (2.0 * step);
    wp.layer(ref.layer)(ref.row, ref.col) = w0.layer(ref.layer)(ref.row, ref.col);
    wm.layer(ref.layer)(ref.row, ref.col) = w0.layer(ref.layer)(ref.row, ref.col);
  }
  return 0.5 * (hess + hess.transpose());
}

// Mean and standard error of per-seed accumulators.
void mean_se(const std::vector<double>& sums, const std::vector<double>& sumsq, int n,
             std::vector<double>& mean, std::vector<double>& se) {
  mean.resize(sums.size());
  se.resize(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    mean[i] = sums[i] / n;
    if (n > 1) {
      const double var = std::max(0.0, (sumsq[i] - n * mean[i] * mean[i]) / (n - 1));
      se[i] = std::sqrt(var / n);
    } else {
      se[i] = 0.0;
    }
  }
}

int pick_weighted(const std::vector<double>& weights, rng::Stream& stream) {
  const double u = stream.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

ParamSet vec_params(const Eigen::VectorXd& v) {
  return ParamSet({Eigen::MatrixXd(v)});
}

Eigen::VectorXd flatten(const ParamSet& params) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(params.value_count()));
  Eigen::Index idx = 0;
  for (int l = 0; l < params.layer_count(); ++l) {
    const Eigen::MatrixXd& m = params.layer(l);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out[idx++] = m(r, c);
    }
  }
  return out;
}

QuadraticFn::QuadraticFn(Eigen::MatrixXd hessian, Eigen::VectorXd w_star)
    : hessian_(std::move(hessian)), w_star_(std::move(w_star)) {
  if (hessian_.rows() != hessian_.cols() || hessian_.rows() != w_star_.size()) {
    throw std::invalid_argument("QuadraticFn: dimension mismatch");
  }
  if (!hessian_.isApprox(hessian_.transpose(), 1e-12)) {
    throw std::invalid_argument("QuadraticFn: Hessian must be symmetric");
  }
}

double QuadraticFn::value(const ParamSet& w) const {
  const Eigen::VectorXd d = flatten(w) - w_star_;
  return 0.5 * d.dot(hessian_ * d);
}

ParamSet QuadraticFn::grad(const ParamSet& w) const {
  const Eigen::VectorXd d = flatten(w) - w_star_;
  return vec_params(hessian_ * d);
}

ScaledFn::ScaledFn(std::shared_ptr<const LocalFn> base, double scale)
    : base_(std::move(base)), scale_(scale) {
  if (base_ == nullptr) throw std::invalid_argument("ScaledFn: null base");
  if (!(scale_ > 0.0)) throw std::invalid_argument("ScaledFn: scale must be > 0");
}

double ScaledFn::value(const ParamSet& w) const { return scale_ * base_->value(w); }

ParamSet ScaledFn::grad(const ParamSet& w) const {
  ParamSet g = base_->grad(w);
  for (int l = 0; l < g.layer_count(); ++l) g.layer(l) *= scale_;
  return g;
}

TiltedTwoWellFn::TiltedTwoWellFn(int dim, double tau) : dim_(dim), tau_(tau) {
  if (dim < 1) throw std::invalid_argument("TiltedTwoWellFn: dim must be >= 1");
  // Above ~1.54 the tilt erases the second well and the two-basin structure.
  if (!(tau > 0.0) || tau >= 1.5) {
    throw std::invalid_argument("TiltedTwoWellFn: tau must be in (0, 1.5)");
  }
}

namespace {
double twowell_q(double x, double tau) {
  const double s = x * x - 1.0;
  return s * s + tau * x;
}
double twowell_dq(double x, double tau) { return 4.0 * x * (x * x - 1.0) + tau; }

// Bisection root of dq on [lo, hi]; the callers pick sign-changing brackets.
double twowell_critical(double lo, double hi, double tau) {
  double flo = twowell_dq(lo, tau);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = twowell_dq(mid, tau);
    if ((flo < 0.0) == (fm < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}
}  // namespace

double TiltedTwoWellFn::global_argmin() const { return twowell_critical(-2.0, -0.5, tau_); }

double TiltedTwoWellFn::local_argmin() const { return twowell_critical(0.5, 1.5, tau_); }

double TiltedTwoWellFn::coordinate_min() const {
  return std::min(twowell_q(global_argmin(), tau_), twowell_q(local_argmin(), tau_));
}

double TiltedTwoWellFn::min_value() const { return dim_ * coordinate_min(); }

double TiltedTwoWellFn::value(const ParamSet& w) const {
  const Eigen::VectorXd x = flatten(w);
  if (x.size() != dim_) throw std::invalid_argument("TiltedTwoWellFn: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) total += twowell_q(x[i], tau_);
  return total;
}

ParamSet TiltedTwoWellFn::grad(const ParamSet& w) const {
  const Eigen::VectorXd x = flatten(w);
  if (x.size() != dim_) throw std::invalid_argument("TiltedTwoWellFn: dimension mismatch");
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = twowell_dq(x[i], tau_);
  return vec_params(g);
}

ModelDataFn::ModelDataFn(ModelSpec spec, std::vector<Sample> samples)
    : spec_(spec), samples_(std::move(samples)) {
  spec_.validate();
  if (samples_.empty()) throw std::invalid_argument("ModelDataFn: empty sample set");
}

double ModelDataFn::value(const ParamSet& w) const { return loss_only(spec_, w, samples_); }

ParamSet ModelDataFn::grad(const ParamSet& w) const {
  return loss_and_grad(spec_, w, samples_).grad;
}

void Federation::check() const {
  if (locals.empty() || locals.size() != weights.size()) {
    throw std::invalid_argument("Federation: locals/weights size mismatch");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("Federation: weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("Federation: weights must sum to 1");
  }
}

double Federation::value(const ParamSet& w) const {
  double total = 0.0;
  for (std::size_t k = 0; k < locals.size(); ++k) total += weights[k] * locals[k]->value(w);
  return total;
}

ParamSet Federation::grad(const ParamSet& w) const {
  ParamSet g = locals[0]->grad(w);
  for (int l = 0; l < g.layer_count(); ++l) g.layer(l) *= weights[0];
  for (std::size_t k = 1; k < locals.size(); ++k) {
    axpy(g, weights[k], locals[k]->grad(w));
  }
  return g;
}

QuadraticFixture make_quadratic_fixture(int dim, int n_clients, double hessian_jitter,
                                        double shift, std::uint64_t seed) {
  if (dim < 1 || n_clients < 1) throw std::invalid_argument("quadratic fixture: bad dimensions");
  if (hessian_jitter < 0.0 || shift < 0.0) {
    throw std::invalid_argument("quadratic fixture: negative spread");
  }
  rng::Stream root(rng::splitmix64(seed ^ kTheoryTag));

  Eigen::MatrixXd base(dim, dim);
  {
    rng::Stream bs = root.fork("base");
    for (Eigen::Index i = 0; i < dim; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) base(i, j) = bs.normal();
    }
  }
  Eigen::MatrixXd mean_h =
      base.transpose() * base / dim + 0.5 * Eigen::MatrixXd::Identity(dim, dim);

  // Per-client perturbations that sum to zero exactly, so the mean Hessian
  // stays known; shrink them if they ever threaten positive definiteness.
  std::vector<Eigen::MatrixXd> perturb(n_clients, Eigen::MatrixXd::Zero(dim, dim));
  if (n_clients > 1 && hessian_jitter > 0.0) {
    rng::Stream js = root.fork("jitter");
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(dim, dim);
    for (int k = 0; k + 1 < n_clients; ++k) {
      Eigen::MatrixXd s(dim, dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) s(i, j) = js.normal();
      }
      perturb[k] = hessian_jitter * 0.5 * (s + s.transpose());
      sum += perturb[k];
    }
    perturb[n_clients - 1] = -sum;
    for (int guard = 0; guard < 60; ++guard) {
      double min_eig = 1e300;
      for (const Eigen::MatrixXd& p : perturb) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mean_h + p);
        min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
      }
      if (min_eig > 0.05) break;
      for (Eigen::MatrixXd& p : perturb) p *= 0.5;
    }
  }

  Eigen::VectorXd w_star(dim);
  {
    rng::Stream ws = root.fork("optimum");
    for (Eigen::Index i = 0; i < dim; ++i) w_star[i] = ws.normal();
  }

  QuadraticFixture fixture;
  fixture.mean_hessian = mean_h;
  fixture.w_star = vec_params(w_star);
  fixture.f_star = 0.0;
  for (int k = 0; k < n_clients; ++k) {
    Eigen::VectorXd w_k = w_star;
    if (shift > 0.0) {
      rng::Stream ss = root.fork("shift", static_cast<std::uint64_t>(k));
      Eigen::VectorXd delta(dim);
      for (Eigen::Index i = 0; i < dim; ++i) delta[i] = ss.normal();
      const double nrm = delta.norm();
      w_k += shift * (nrm > 1e-12 ? (delta / nrm).eval() : Eigen::VectorXd::Unit(dim, 0).eval());
    }
    fixture.owned.push_back(std::make_unique<QuadraticFn>(mean_h + perturb[k], w_k));
  }
  for (const auto& fn : fixture.owned) fixture.fed.locals.push_back(fn.get());
  fixture.fed.weights.assign(n_clients, 1.0 / n_clients);
  fixture.fed.check();
  return fixture;
}

TwoWellFixture make_twowell_fixture(int dim, int n_clients, double scale_spread, double tau,
                                    std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("twowell fixture: need clients");
  if (scale_spread < 0.0 || scale_spread >= 0.5) {
    throw std::invalid_argument("twowell fixture: scale_spread must be in [0, 0.5)");
  }
  rng::Stream root(rng::splitmix64(seed ^ kTheoryTag ^ 0x11d7u));

  std::vector<double> scales(n_clients, 1.0);
  if (n_clients > 1 && scale_spread > 0.0) {
    rng::Stream ss = root.fork("scales");
    double mean = 0.0;
    for (double& s : scales) {
      s = ss.uniform(-1.0, 1.0);
      mean += s;
    }
    mean /= n_clients;
    for (double& s : scales) s = 1.0 + scale_spread * (s - mean);
  }

  TwoWellFixture fixture;
  fixture.base = std::make_shared<TiltedTwoWellFn>(dim, tau);
  fixture.f_min = fixture.base->min_value();
  for (int k = 0; k < n_clients; ++k) {
    fixture.owned.push_back(std::make_unique<ScaledFn>(fixture.base, scales[k]));
  }
  for (const auto& fn : fixture.owned) fixture.fed.locals.push_back(fn.get());
  fixture.fed.weights.assign(n_clients, 1.0 / n_clients);
  fixture.fed.check();
  return fixture;
}

std::vector<ParamSet> sample_box(const ParamSet& center, double radius, int n,
                                 rng::Stream& stream) {
  if (n < 1 || !(radius > 0.0)) throw std::invalid_argument("sample_box: bad arguments");
  std::vector<ParamSet> points;
  points.reserve(n);
  for (int i = 0; i < n; ++i) {
    ParamSet p = center;
    for (int l = 0; l < p.layer_count(); ++l) {
      Eigen::MatrixXd& m = p.layer(l);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += stream.uniform(-radius, radius);
      }
    }
    points.push_back(std::move(p));
  }
  return points;
}

double estimate_dissimilarity(const Federation& fed, const std::vector<ParamSet>& probes,
                              double tol) {
  fed.check();
  double worst = -1.0;
  for (const ParamSet& p : probes) {
    const double denom = fed.grad(p).squared_norm();
    if (denom <= tol) continue;
    double num = 0.0;
    for (std::size_t k = 0; k < fed.locals.size(); ++k) {
      num += fed.weights[k] * fed.locals[k]->grad(p).squared_norm();
    }
    worst = std::max(worst, num / denom);
  }
  if (worst < 0.0) {
    throw std::runtime_error(
        "dissimilarity undefined: central gradient vanished at every probe point");
  }
  return std::sqrt(worst);
}

double estimate_alignment(const Federation& fed, const std::vector<ParamSet>& probes,
                          double tol) {
  fed.check();
  double lowest = 2.0;
  bool usable = false;
  for (const ParamSet& p : probes) {
    const ParamSet central = fed.grad(p);
    const double denom = central.squared_norm();
    if (denom <= tol) continue;
    ParamSet mix = ParamSet::zeros_like(central);
    for (std::size_t k = 0; k < fed.locals.size(); ++k) {
      axpy(mix, fed.weights[k], fed.locals[k]->grad(p));
    }
    lowest = std::min(lowest, central.dot(mix) / denom);
    usable = true;
  }
  if (!usable) {
    throw std::runtime_error(
        "alignment undefined: central gradient vanished at every probe point");
  }
  if (lowest <= 0.0) {
    throw std::runtime_error("alignment non-positive; the descent analysis does not apply");
  }
  return std::min(lowest, 1.0);
}

ConstantsEstimate estimate_curvature(const LocalFn& fn, const ParamSet& w0, double step) {
  const Eigen::MatrixXd hess = fd_hessian(fn, w0, step);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
  return ConstantsEstimate{es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

double estimate_smoothness_box(const LocalFn& fn, const ParamSet& center, double radius,
                               int n_points, rng::Stream& stream, double step) {
  double worst = -1e300;
  for (const ParamSet& p : sample_box(center, radius, n_points, stream)) {
    const Eigen::MatrixXd hess = fd_hessian(fn, p, step);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
    worst = std::max(worst, es.eigenvalues().maxCoeff());
  }
  return worst;
}

GapBoundReport check_gap_lower_bound(const LocalFn& fn, double mu, double f_star,
                                     const std::vector<ParamSet>& points, double tol) {
  if (!(mu > 0.0)) throw std::invalid_argument("check_gap_lower_bound: mu must be > 0");
  GapBoundReport report;
  report.n_points = static_cast<int>(points.size());
  for (const ParamSet& p : points) {
    const double lhs = 2.0 * mu * (fn.value(p) - f_star);
    const double rhs = fn.grad(p).squared_norm();
    const double violation = lhs - rhs;
    if (violation > tol) {
      report.n_violations += 1;
      report.max_violation = std::max(report.max_violation, violation);
    }
  }
  report.pass = report.n_violations == 0;
  return report;
}

TrajectoryStats run_async_trajectories(const Federation& fed, const ParamSet& w0, double eta,
                                       int iters, int n_seeds, double f_star,
                                       std::uint64_t seed) {
  fed.check();
  if (iters < 1 || n_seeds < 1) throw std::invalid_argument("trajectory: bad arguments");
  if (!(eta > 0.0)) throw std::invalid_argument("trajectory: eta must be > 0");

  std::vector<double> gap_sum(iters + 1, 0.0), gap_sq(iters + 1, 0.0);
  std::vector<double> grad_sum(iters, 0.0), grad_sq(iters, 0.0);
  rng::Stream root(rng::splitmix64(seed ^ 0x7353c1ab9ef02d84ull));

  for (int s = 0; s < n_seeds; ++s) {
    rng::Stream stream = root.fork("seed", static_cast<std::uint64_t>(s));
    ParamSet w = w0;
    for (int t = 0; t <= iters; ++t) {
      const double gap = fed.value(w) - f_star;
      gap_sum[t] += gap;
      gap_sq[t] += gap * gap;
      if (t == iters) break;
      const double gsq = fed.grad(w).squared_norm();
      grad_sum[t] += gsq;
      grad_sq[t] += gsq * gsq;
      const int k = pick_weighted(fed.weights, stream);
      axpy(w, -eta, fed.locals[k]->grad(w));
    }
  }

  TrajectoryStats stats;
  mean_se(gap_sum, gap_sq, n_seeds, stats.mean_gap, stats.se_gap);
  mean_se(grad_sum, grad_sq, n_seeds, stats.mean_grad_sq, stats.se_grad_sq);
  return stats;
}

ContractionReport check_contraction_bound(const Federation& fed, const ParamSet& w0,
                                          const ParamSet& w_star, double f_star,
                                          const ConstantsEstimate& curvature, double eta_scale,
                                          int iters, int n_seeds, std::uint64_t seed) {
  fed.check();
  if (!(curvature.mu > 0.0) || !(curvature.L >= curvature.mu)) {
    throw std::invalid_argument("check_contraction_bound: need 0 < mu <= L");
  }
  if (!(eta_scale > 0.0)) throw std::invalid_argument("check_contraction_bound: bad eta_scale");

  rng::Stream root(rng::splitmix64(seed ^ 0x9b71a6c35ed0428full));
  ParamSet span = w0;
  axpy(span, -1.0, w_star);
  const double radius = 1.2 * std::max(span.norm(), 0.5);
  rng::Stream probe_stream = root.fork("probes");
  const std::vector<ParamSet> probes = sample_box(w_star, radius, 24, probe_stream);

  ContractionReport report;
  report.mu = curvature.mu;
  report.L = curvature.L;
  report.v_hat = estimate_dissimilarity(fed, probes);
  report.eps_hat = estimate_alignment(fed, probes);
  report.ceiling = 2.0 * report.eps_hat / (report.L * report.v_hat * report.v_hat);
  report.eta = eta_scale * report.ceiling;
  report.certified = report.eta > 0.0 && report.eta < report.ceiling;
  report.gamma_prime =
      report.eps_hat - report.L * report.eta * report.v_hat * report.v_hat / 2.0;
  report.binding = report.gamma_prime > 0.0;

  const TrajectoryStats stats = run_async_trajectories(fed, w0, report.eta, iters, n_seeds,
                                                       f_star, root.fork("traj").seed());
  report.mean_gap = stats.mean_gap;
  report.se_gap = stats.se_gap;

  const double factor =
      std::max(0.0, 1.0 - 2.0 * report.mu * report.gamma_prime * report.eta);
  report.bound.resize(stats.mean_gap.size());
  const double initial_gap = stats.mean_gap[0];
  double decay = 1.0;
  for (std::size_t t = 0; t < report.bound.size(); ++t) {
    report.bound[t] = decay * initial_gap;
    decay *= factor;
  }

  report.pass = report.certified && report.binding;
  for (std::size_t t = 0; t < report.bound.size() && report.pass; ++t) {
    if (stats.mean_gap[t] > report.bound[t] + 2.0 * stats.se_gap[t] + 1e-12) {
      report.pass = false;
      report.first_violation_t = static_cast<int>(t);
    }
  }
  return report;
}

BudgetReport check_descent_budget(const Federation& fed, const ParamSet& w0, double f_min,
                                  double smoothness, double eta_scale, int iters, int n_seeds,
                                  std::uint64_t seed) {
  fed.check();
  if (!(smoothness > 0.0)) throw std::invalid_argument("check_descent_budget: bad smoothness");
  if (!(eta_scale > 0.0)) throw std::invalid_argument("check_descent_budget: bad eta_scale");
  if (iters < 1 || n_seeds < 1) throw std::invalid_argument("check_descent_budget: bad sizes");

  rng::Stream root(rng::splitmix64(seed ^ 0x48d2fb6091ce73a5ull));
  rng::Stream probe_stream = root.fork("probes");
  const std::vector<ParamSet> probes = sample_box(w0, 1.0, 24, probe_stream);

  BudgetReport report;
  report.L = smoothness;
  report.v_hat = estimate_dissimilarity(fed, probes);
  report.eps_hat = estimate_alignment(fed, probes);
  report.budget = fed.value(w0) - f_min;
  report.ceiling =
      (2.0 * report.eps_hat - 1.0) / (report.L * report.v_hat * report.v_hat);
  if (!(report.ceiling > 0.0)) {
    // Alignment at or below 1/2 leaves no admissible step; nothing to score.
    return report;
  }
  report.eta = eta_scale * report.ceiling;
  report.certified = report.eta > 0.0 && report.eta < report.ceiling;
  if (!report.certified) return report;

  rng::Stream traj_root = root.fork("traj");
  double lhs_sum = 0.0;
  double lhs_sq = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    rng::Stream stream = traj_root.fork("seed", static_cast<std::uint64_t>(s));
    ParamSet w = w0;
    double acc = 0.0;
    for (int t = 0; t < iters; ++t) {
      acc += 0.5 * report.eta * fed.grad(w).squared_norm();
      const int k = pick_weighted(fed.weights, stream);
      axpy(w, -report.eta, fed.locals[k]->grad(w));
    }
    lhs_sum += acc;
    lhs_sq += acc * acc;
  }
  report.lhs = lhs_sum / n_seeds;
  if (n_seeds > 1) {
    const double var = std::max(0.0, (lhs_sq - n_seeds * report.lhs * report.lhs) / (n_seeds - 1));
    report.se_lhs = std::sqrt(var / n_seeds);
  }
  report.pass = report.lhs <= report.budget;
  return report;
}

}  // namespace asofed
