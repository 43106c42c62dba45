#pragma once

// Gaussian Process regression over a scalar heading feature with an
// RBF + white-noise kernel and evidence-maximizing hyperparameter fits.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace mbot {

struct KernelParams {
  double length_scale = 1.0;     // radians
  double signal_variance = 1.0;  // (microns/s)^2
  double noise_variance = 1e-2;  // (microns/s)^2

  [[nodiscard]] bool valid() const {
    return std::isfinite(length_scale) && std::isfinite(signal_variance) && std::isfinite(noise_variance) &&
           length_scale > 0.0 && signal_variance > 0.0 && noise_variance >= 0.0;
  }
  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Raised when the covariance cannot be factorized even after jitter escalation.
class GPError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smooth part of the kernel, without the white-noise term.
inline double rbf_kernel(double x, double x2, const KernelParams& p) {
  const double d = x - x2;
  return p.signal_variance * std::exp(-d * d / (2.0 * p.length_scale * p.length_scale));
}

/// Full kernel: RBF plus white noise on exact input coincidence.
inline double kernel_eval(double x, double x2, const KernelParams& p) {
  return rbf_kernel(x, x2, p) + (x == x2 ? p.noise_variance : 0.0);
}

namespace detail {

inline constexpr std::array<double, 4> kJitterLadder{0.0, 1e-10, 1e-8, 1e-6};

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

/// K + eta*I over `inputs`.
inline Eigen::MatrixXd noisy_covariance(std::span<const double> inputs, const KernelParams& p) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = p.signal_variance + p.noise_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = rbf_kernel(inputs[i], inputs[j], p);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

inline std::optional<Factorization> try_factorize(const Eigen::MatrixXd& k) {
  for (double jitter : kJitterLadder) {
    Factorization f;
    if (jitter == 0.0) {
      f.llt.compute(k);
    } else {
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      f.llt.compute(kj);
    }
    if (f.llt.info() == Eigen::Success) {
      f.jitter = jitter;
      return f;
    }
  }
  return std::nullopt;
}

inline Factorization factorize(const Eigen::MatrixXd& k) {
  auto f = try_factorize(k);
  if (!f) throw GPError("covariance matrix is not positive definite after jitter escalation");
  return std::move(*f);
}

inline Eigen::VectorXd to_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void check_training_data(std::span<const double> inputs, std::span<const double> targets) {
  if (inputs.size() != targets.size())
    throw std::invalid_argument("gp: inputs and targets differ in length");
  for (double x : inputs)
    if (!std::isfinite(x)) throw std::invalid_argument("gp: non-finite training input");
  for (double y : targets)
    if (!std::isfinite(y)) throw std::invalid_argument("gp: non-finite training target");
}

}  // namespace detail

struct GPPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// A Gaussian Process conditioned on training data. Immutable once built;
/// concurrent predictions are safe.
class GPModel {
 public:
  /// Unfitted model; predict() throws.
  GPModel() = default;

  /// Model with no training data: predictions return the prior.
  static GPModel prior(const KernelParams& params) {
    if (!params.valid()) throw std::invalid_argument("gp: invalid kernel parameters");
    GPModel m;
    m.params_ = params;
    m.fitted_ = true;
    return m;
  }

  /// Conditions on data with fixed hyperparameters (no optimization).
  static GPModel condition(std::vector<double> inputs, std::vector<double> targets, const KernelParams& params) {
    detail::check_training_data(inputs, targets);
    if (!params.valid()) throw std::invalid_argument("gp: invalid kernel parameters");
    GPModel m;
    m.params_ = params;
    m.inputs_ = std::move(inputs);
    m.targets_ = std::move(targets);
    if (!m.inputs_.empty()) {
      auto f = detail::factorize(detail::noisy_covariance(m.inputs_, params));
      m.jitter_ = f.jitter;
      m.alpha_ = f.llt.solve(detail::to_vector(m.targets_));
      m.chol_ = f.llt.matrixL();
    }
    m.fitted_ = true;
    return m;
  }

  [[nodiscard]] bool fitted() const { return fitted_; }
  [[nodiscard]] bool empty() const { return inputs_.empty(); }
  [[nodiscard]] std::size_t size() const { return inputs_.size(); }
  [[nodiscard]] const std::vector<double>& inputs() const { return inputs_; }
  [[nodiscard]] const std::vector<double>& targets() const { return targets_; }
  [[nodiscard]] const KernelParams& params() const { return params_; }
  [[nodiscard]] const Eigen::MatrixXd& chol_factor() const { return chol_; }
  [[nodiscard]] const Eigen::VectorXd& alpha_weights() const { return alpha_; }
  [[nodiscard]] double jitter() const { return jitter_; }

  [[nodiscard]] double predict_mean(double x) const {
    require_fitted();
    double mean = 0.0;
    for (std::size_t i = 0; i < inputs_.size(); ++i)
      mean += alpha_[static_cast<Eigen::Index>(i)] * rbf_kernel(x, inputs_[i], params_);
    return mean;
  }

  [[nodiscard]] GPPrediction predict(double x) const {
    require_fitted();
    const double prior_var = params_.signal_variance + params_.noise_variance;
    if (inputs_.empty()) return {0.0, prior_var};
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) ks[i] = rbf_kernel(x, inputs_[static_cast<std::size_t>(i)], params_);
    const double mean = ks.dot(alpha_);
    const Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(ks);
    return {mean, std::max(0.0, prior_var - v.squaredNorm())};
  }

 private:
  void require_fitted() const {
    if (!fitted_) throw std::logic_error("gp: model has not been fitted");
  }

  bool fitted_ = false;
  std::vector<double> inputs_;
  std::vector<double> targets_;
  KernelParams params_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

/// Log evidence and its gradient with respect to
/// (log length_scale, log signal_variance, log noise_variance).
struct Evidence {
  double value = 0.0;
  std::array<double, 3> gradient{};
};

inline Evidence log_marginal_likelihood_with_gradient(const KernelParams& p, std::span<const double> inputs,
                                                      std::span<const double> targets) {
  detail::check_training_data(inputs, targets);
  if (inputs.empty()) throw std::invalid_argument("gp: log marginal likelihood needs at least one sample");
  if (!p.valid()) throw std::invalid_argument("gp: invalid kernel parameters");
  const auto n = static_cast<Eigen::Index>(inputs.size());
  const Eigen::MatrixXd k = detail::noisy_covariance(inputs, p);
  const auto f = detail::factorize(k);
  const Eigen::VectorXd y = detail::to_vector(targets);
  const Eigen::VectorXd alpha = f.llt.solve(y);
  const Eigen::MatrixXd l = f.llt.matrixL();

  Evidence e;
  e.value = -0.5 * y.dot(alpha) - l.diagonal().array().log().sum() -
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // d/dtheta = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
  const Eigen::MatrixXd w = alpha * alpha.transpose() - f.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double inv_l2 = 1.0 / (p.length_scale * p.length_scale);
  double g_len = 0.0, g_sig = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = inputs[i] - inputs[j];
      const double r = k(i, j);
      g_sig += w(i, j) * r;
      g_len += w(i, j) * r * d * d * inv_l2;
    }
  }
  g_sig *= 2.0;
  g_len *= 2.0;
  g_sig += w.diagonal().sum() * p.signal_variance;
  e.gradient = {0.5 * g_len, 0.5 * g_sig, 0.5 * w.diagonal().sum() * p.noise_variance};
  return e;
}

inline double log_marginal_likelihood(const KernelParams& p, std::span<const double> inputs,
                                      std::span<const double> targets) {
  detail::check_training_data(inputs, targets);
  if (inputs.empty()) throw std::invalid_argument("gp: log marginal likelihood needs at least one sample");
  if (!p.valid()) throw std::invalid_argument("gp: invalid kernel parameters");
  const auto f = detail::factorize(detail::noisy_covariance(inputs, p));
  const Eigen::VectorXd y = detail::to_vector(targets);
  const Eigen::MatrixXd l = f.llt.matrixL();
  return -0.5 * y.dot(f.llt.solve(y)) - l.diagonal().array().log().sum() -
         0.5 * static_cast<double>(inputs.size()) * std::log(2.0 * std::numbers::pi);
}

struct HyperBounds {
  double length_scale_min = 1e-2, length_scale_max = 10.0;
  double signal_variance_min = 1e-6, signal_variance_max = 1e4;
  double noise_variance_min = 1e-8, noise_variance_max = 1e2;
};

struct FitOptions {
  int n_starts = 8;
  int max_iterations = 100;
  double tolerance = 1e-10;  // relative evidence gain that ends an ascent
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
  HyperBounds bounds;
};

struct FitReport {
  double initial_evidence = -std::numeric_limits<double>::infinity();
  double best_evidence = -std::numeric_limits<double>::infinity();
  int best_start = -1;
};

namespace detail {

using LogParams = std::array<double, 3>;

inline KernelParams from_log(const LogParams& t) { return {std::exp(t[0]), std::exp(t[1]), std::exp(t[2])}; }

struct LogBox {
  LogParams lo, hi;
  explicit LogBox(const HyperBounds& b)
      : lo{std::log(b.length_scale_min), std::log(b.signal_variance_min), std::log(b.noise_variance_min)},
        hi{std::log(b.length_scale_max), std::log(b.signal_variance_max), std::log(b.noise_variance_max)} {}
  [[nodiscard]] LogParams clamp(LogParams t) const {
    for (int i = 0; i < 3; ++i) t[i] = std::clamp(t[i], lo[i], hi[i]);
    return t;
  }
};

inline std::optional<Evidence> try_evidence(const LogParams& t, std::span<const double> x,
                                            std::span<const double> y) {
  try {
    return log_marginal_likelihood_with_gradient(from_log(t), x, y);
  } catch (const GPError&) {
    return std::nullopt;
  }
}

/// Box-projected BFGS ascent on the log evidence in log-parameter space.
inline std::optional<std::pair<LogParams, double>> ascend(LogParams theta, const LogBox& box,
                                                          std::span<const double> x, std::span<const double> y,
                                                          const FitOptions& opt) {
  using Vec3 = Eigen::Vector3d;
  theta = box.clamp(theta);
  auto cur = try_evidence(theta, x, y);
  if (!cur) return std::nullopt;
  Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
  Vec3 g = Vec3::Map(cur->gradient.data());
  constexpr double kMaxStep = 2.0;  // log units

  for (int it = 0; it < opt.max_iterations; ++it) {
    // Freeze coordinates pinned at a bound with the gradient pointing outward.
    std::array<bool, 3> frozen{};
    for (int i = 0; i < 3; ++i)
      frozen[i] = (theta[i] <= box.lo[i] && g[i] < 0.0) || (theta[i] >= box.hi[i] && g[i] > 0.0);
    Vec3 gf = g;
    for (int i = 0; i < 3; ++i)
      if (frozen[i]) gf[i] = 0.0;
    if (gf.norm() == 0.0) break;
    Vec3 d = h * gf;
    for (int i = 0; i < 3; ++i)
      if (frozen[i]) d[i] = 0.0;
    if (d.dot(gf) <= 0.0) {
      h.setIdentity();
      d = gf;
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    if (dmax > kMaxStep) d *= kMaxStep / dmax;

    bool accepted = false;
    LogParams next{};
    Evidence next_e;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      LogParams cand{};
      for (int i = 0; i < 3; ++i) cand[i] = theta[i] + t * d[i];
      cand = box.clamp(cand);
      Vec3 s;
      for (int i = 0; i < 3; ++i) s[i] = cand[i] - theta[i];
      auto e = try_evidence(cand, x, y);
      if (e && e->value >= cur->value + 1e-4 * g.dot(s)) {
        next = cand;
        next_e = *e;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    Vec3 s, gn = Vec3::Map(next_e.gradient.data());
    for (int i = 0; i < 3; ++i) s[i] = next[i] - theta[i];
    const Vec3 yv = g - gn;  // gradient change of the negated objective
    const double sy = s.dot(yv);
    const double gain = next_e.value - cur->value;
    theta = next;
    cur = next_e;
    g = gn;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::Matrix3d id = Eigen::Matrix3d::Identity();
      h = (id - rho * s * yv.transpose()) * h * (id - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    if (gain <= opt.tolerance * (1.0 + std::abs(cur->value))) break;
  }
  return std::make_pair(theta, cur->value);
}

}  // namespace detail

/// Fits kernel hyperparameters by multi-start evidence maximization and
/// conditions the model on the data. Start 0 is `init`; the remaining
/// starts are drawn log-uniformly inside the bounds from `options.seed`.
inline GPModel fit(std::vector<double> inputs, std::vector<double> targets, const KernelParams& init,
                   const FitOptions& options = {}, FitReport* report = nullptr) {
  detail::check_training_data(inputs, targets);
  if (inputs.size() < 2) throw std::invalid_argument("gp: fit needs at least two samples");
  if (!init.valid()) throw std::invalid_argument("gp: invalid initial kernel parameters");
  if (options.n_starts < 1) throw std::invalid_argument("gp: n_starts must be at least 1");

  const detail::LogBox box(options.bounds);
  std::mt19937_64 rng(options.seed);
  std::vector<detail::LogParams> starts;
  starts.push_back(box.clamp({std::log(init.length_scale), std::log(init.signal_variance),
                              std::log(std::max(init.noise_variance, options.bounds.noise_variance_min))}));
  for (int s = 1; s < options.n_starts; ++s) {
    detail::LogParams t{};
    for (int i = 0; i < 3; ++i) t[i] = std::uniform_real_distribution<double>(box.lo[i], box.hi[i])(rng);
    starts.push_back(t);
  }

  FitReport rep;
  if (auto e0 = detail::try_evidence(starts.front(), inputs, targets)) rep.initial_evidence = e0->value;
  std::optional<detail::LogParams> best;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    auto r = detail::ascend(starts[s], box, inputs, targets, options);
    if (r && r->second > rep.best_evidence) {
      rep.best_evidence = r->second;
      rep.best_start = static_cast<int>(s);
      best = r->first;
    }
  }
  if (!best) throw GPError("gp: every optimization start failed to factorize the covariance");
  if (report) *report = rep;
  return GPModel::condition(std::move(inputs), std::move(targets), detail::from_log(*best));
}

// JSON persistence. Only data and hyperparameters are stored; the factor
// is recomputed on load.

inline void to_json(nlohmann::json& j, const KernelParams& p) {
  j = {{"length_scale", p.length_scale}, {"signal_variance", p.signal_variance}, {"noise_variance", p.noise_variance}};
}

inline void from_json(const nlohmann::json& j, KernelParams& p) {
  p.length_scale = j.at("length_scale").get<double>();
  p.signal_variance = j.at("signal_variance").get<double>();
  p.noise_variance = j.at("noise_variance").get<double>();
}

inline nlohmann::json gp_to_json(const GPModel& m) {
  if (!m.fitted()) throw std::logic_error("gp: cannot serialize an unfitted model");
  return {{"inputs", m.inputs()}, {"targets", m.targets()}, {"params", m.params()}};
}

inline GPModel gp_from_json(const nlohmann::json& j) {
  auto params = j.at("params").get<KernelParams>();
  auto inputs = j.at("inputs").get<std::vector<double>>();
  auto targets = j.at("targets").get<std::vector<double>>();
  if (inputs.empty() && targets.empty()) return GPModel::prior(params);
  return GPModel::condition(std::move(inputs), std::move(targets), params);
}

}  // namespace mbot
