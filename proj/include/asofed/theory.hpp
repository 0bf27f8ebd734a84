#pragma once

#include "asofed/models.hpp"
#include "asofed/params.hpp"
#include "asofed/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <vector>

namespace asofed {

/// Differentiable objective over a ParamSet.
class LocalFn {
 public:
  virtual ~LocalFn() = default;
  virtual double value(const ParamSet& w) const = 0;
  virtual ParamSet grad(const ParamSet& w) const = 0;
};

/// Wrap a vector as the single-layer ParamSet the probe objectives use.
ParamSet vec_params(const Eigen::VectorXd& v);
Eigen::VectorXd flatten(const ParamSet& params);

/// 0.5 * (w - w*)' H (w - w*) with a fixed symmetric positive-definite H.
class QuadraticFn : public LocalFn {
 public:
  QuadraticFn(Eigen::MatrixXd hessian, Eigen::VectorXd w_star);
  double value(const ParamSet& w) const override;
  ParamSet grad(const ParamSet& w) const override;
  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const Eigen::VectorXd& w_star() const { return w_star_; }

 private:
  Eigen::MatrixXd hessian_;
  Eigen::VectorXd w_star_;
};

/// c * f for a shared base objective.
class ScaledFn : public LocalFn {
 public:
  ScaledFn(std::shared_ptr<const LocalFn> base, double scale);
  double value(const ParamSet& w) const override;
  ParamSet grad(const ParamSet& w) const override;
  double scale() const { return scale_; }

 private:
  std::shared_ptr<const LocalFn> base_;
  double scale_;
};

/// Separable smooth non-convex objective: sum_i q(x_i) with
/// q(x) = (x^2 - 1)^2 + tau * x. For tau in (0, ~1.5) this has a shallow
/// local basin at positive x and the global minimum at negative x, so a
/// trajectory started in the shallow basin captures far less decrease than
/// the full gap to the global minimum.
class TiltedTwoWellFn : public LocalFn {
 public:
  TiltedTwoWellFn(int dim, double tau);
  double value(const ParamSet& w) const override;
  ParamSet grad(const ParamSet& w) const override;
  double tau() const { return tau_; }
  int dim() const { return dim_; }
  double coordinate_min() const;   // min over x of q(x)
  double min_value() const;        // dim * coordinate_min
  double global_argmin() const;    // per-coordinate global minimizer
  double local_argmin() const;     // per-coordinate shallow minimizer

 private:
  int dim_;
  double tau_;
};

/// Full-batch loss of a model on a fixed sample set.
class ModelDataFn : public LocalFn {
 public:
  ModelDataFn(ModelSpec spec, std::vector<Sample> samples);
  double value(const ParamSet& w) const override;
  ParamSet grad(const ParamSet& w) const override;

 private:
  ModelSpec spec_;
  std::vector<Sample> samples_;
};

/// Weighted collection of local objectives; the central objective is
/// F(w) = sum_k weight_k * f_k(w) and the weights double as the client
/// arrival distribution.
struct Federation {
  std::vector<const LocalFn*> locals;
  std::vector<double> weights;

  double value(const ParamSet& w) const;
  ParamSet grad(const ParamSet& w) const;
  void check() const;  // sizes match, weights positive and sum to ~1
};

// ---- fixtures ----

/// Quadratic clients with a shared optimum. hessian_jitter adds symmetric
/// per-client perturbations that cancel exactly across clients, so the mean
/// Hessian (and with it mu, L, and the central optimum) is known; shift
/// moves individual optima apart to dial gradient dissimilarity up.
struct QuadraticFixture {
  std::vector<std::unique_ptr<const LocalFn>> owned;
  Federation fed;
  Eigen::MatrixXd mean_hessian;
  ParamSet w_star;
  double f_star = 0.0;  // exact when shift == 0
};
QuadraticFixture make_quadratic_fixture(int dim, int n_clients, double hessian_jitter,
                                        double shift, std::uint64_t seed);

/// Scaled copies a_k * f of one tilted two-well objective with mean(a) = 1,
/// so the central objective equals f and its global minimum is known while
/// per-client gradient magnitudes differ.
struct TwoWellFixture {
  std::vector<std::unique_ptr<const LocalFn>> owned;
  Federation fed;
  std::shared_ptr<const TiltedTwoWellFn> base;
  double f_min = 0.0;
};
TwoWellFixture make_twowell_fixture(int dim, int n_clients, double scale_spread, double tau,
                                    std::uint64_t seed);

// ---- estimators ----

/// Uniform box sample around a center point, used to pick probe locations.
std::vector<ParamSet> sample_box(const ParamSet& center, double radius, int n,
                                 rng::Stream& stream);

/// Tightest gradient-dissimilarity constant over the probe set:
/// max over usable probes of sqrt( sum_k weight_k ||grad f_k||^2 / ||grad F||^2 ).
/// Probes where ||grad F||^2 <= tol are skipped; all-skipped is an error.
double estimate_dissimilarity(const Federation& fed, const std::vector<ParamSet>& probes,
                              double tol = 1e-12);

/// Alignment constant: min over usable probes of
/// (grad F . sum_k weight_k grad f_k) / ||grad F||^2, clipped to (0, 1].
/// Non-positive alignment anywhere is an error (the analysis needs > 0).
double estimate_alignment(const Federation& fed, const std::vector<ParamSet>& probes,
                          double tol = 1e-12);

struct ConstantsEstimate {
  double mu = 0.0;
  double L = 0.0;
};

/// Curvature bounds from a finite-difference Hessian at w0 (exact for
/// quadratics): mu = smallest eigenvalue, L = largest.
ConstantsEstimate estimate_curvature(const LocalFn& fn, const ParamSet& w0, double step = 1e-4);

/// Largest eigenvalue of the finite-difference Hessian over sampled points.
double estimate_smoothness_box(const LocalFn& fn, const ParamSet& center, double radius,
                               int n_points, rng::Stream& stream, double step = 1e-4);

// ---- checks ----

/// Verifies 2*mu*(F(w) - f_star) <= ||grad F(w)||^2 at every point.
struct GapBoundReport {
  int n_points = 0;
  int n_violations = 0;
  double max_violation = 0.0;  // largest LHS - RHS
  bool pass = false;
};
GapBoundReport check_gap_lower_bound(const LocalFn& fn, double mu, double f_star,
                                     const std::vector<ParamSet>& points, double tol = 1e-9);

/// Stochastic trajectory of the analyzed update: at each step draw client k
/// from the arrival weights and apply w <- w - eta * grad f_k(w).
struct TrajectoryStats {
  std::vector<double> mean_gap;  // E[F(w^t)] - f_star, t = 0..iters
  std::vector<double> se_gap;
  std::vector<double> mean_grad_sq;  // E||grad F(w^t)||^2, t = 0..iters-1
  std::vector<double> se_grad_sq;
};
TrajectoryStats run_async_trajectories(const Federation& fed, const ParamSet& w0, double eta,
                                       int iters, int n_seeds, double f_star,
                                       std::uint64_t seed);

/// Geometric-decay check for strongly convex federations: the seed-mean
/// optimality gap must stay below
///   (1 - 2*mu*gamma'*eta)^T * (F(w0) - f_star),  gamma' = eps - L*eta*V^2/2,
/// at every T, with 2-standard-error slack. `certified` reports whether the
/// step stayed below the admissible ceiling 2*eps/(L*V^2); `binding`
/// whether gamma' > 0 (otherwise the bound is vacuous and not scored).
struct ContractionReport {
  double mu = 0.0, L = 0.0, v_hat = 0.0, eps_hat = 0.0;
  double eta = 0.0, gamma_prime = 0.0, ceiling = 0.0;
  bool certified = false;
  bool binding = false;
  bool pass = false;
  int first_violation_t = -1;
  std::vector<double> bound;
  std::vector<double> mean_gap;
  std::vector<double> se_gap;
};
ContractionReport check_contraction_bound(const Federation& fed, const ParamSet& w0,
                                          const ParamSet& w_star, double f_star,
                                          const ConstantsEstimate& curvature, double eta_scale,
                                          int iters, int n_seeds, std::uint64_t seed);

/// Cumulative-descent check for smooth non-convex federations: with the
/// step below (2*eps - 1)/(L*V^2), the accumulated sum over the trajectory
/// of (eta/2) * E||grad F(w^t)||^2 must stay within F(w0) - f_min.
struct BudgetReport {
  double L = 0.0, v_hat = 0.0, eps_hat = 0.0;
  double eta = 0.0, ceiling = 0.0;
  bool certified = false;
  double lhs = 0.0;
  double se_lhs = 0.0;
  double budget = 0.0;
  bool pass = false;
};
BudgetReport check_descent_budget(const Federation& fed, const ParamSet& w0, double f_min,
                                  double smoothness, double eta_scale, int iters, int n_seeds,
                                  std::uint64_t seed);

}  // namespace asofed
