#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrlob/errors.hpp"
#include "qrlob/optim.hpp"
#include "qrlob/rng.hpp"

namespace qrlob {

// Multivariate point process event. For the six-dimensional best-quote flow
// the component encoding is side * 3 + type with sides {bid=0, ask=1} and
// types {limit=0, cancel=1, market=2}; sizes are attached afterwards by the
// sizing policy.
struct MarkedEvent {
  double t = 0.0;
  int component = 0;
  std::int64_t size = 0;
};

// Mutually exciting process with exponential kernels
// h_ij(t) = alpha_ij * exp(-beta_ij * t): component i's rate is its baseline
// plus the summed kernel responses to every past event of every component j.
struct HawkesModel {
  int dim = 0;
  std::vector<double> mu;     // baseline rates, size dim
  std::vector<double> alpha;  // row-major dim x dim, response amplitudes
  std::vector<double> beta;   // row-major dim x dim, decay rates

  double a(int i, int j) const { return alpha[static_cast<std::size_t>(i * dim + j)]; }
  double b(int i, int j) const { return beta[static_cast<std::size_t>(i * dim + j)]; }
  double& a(int i, int j) { return alpha[static_cast<std::size_t>(i * dim + j)]; }
  double& b(int i, int j) { return beta[static_cast<std::size_t>(i * dim + j)]; }
};

inline HawkesModel make_hawkes(int dim, std::vector<double> mu,
                               std::vector<double> alpha,
                               std::vector<double> beta) {
  HawkesModel m{dim, std::move(mu), std::move(alpha), std::move(beta)};
  const auto d = static_cast<std::size_t>(dim);
  if (m.mu.size() != d || m.alpha.size() != d * d || m.beta.size() != d * d)
    throw DataError("Hawkes parameter sizes do not match the dimension");
  for (double v : m.mu)
    if (!(v > 0.0)) throw DataError("Hawkes baselines must be positive");
  for (double v : m.alpha)
    if (v < 0.0) throw DataError("Hawkes amplitudes must be non-negative");
  for (double v : m.beta)
    if (!(v > 0.0)) throw DataError("Hawkes decays must be positive");
  return m;
}

// Expected offspring counts A_ij = alpha_ij / beta_ij; the process is
// stationary iff the spectral radius of A is below one.
inline Eigen::MatrixXd branching_matrix(const HawkesModel& m) {
  Eigen::MatrixXd a(m.dim, m.dim);
  for (int i = 0; i < m.dim; ++i)
    for (int j = 0; j < m.dim; ++j) a(i, j) = m.a(i, j) / m.b(i, j);
  return a;
}

inline double spectral_radius(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/false);
  double radius = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    radius = std::max(radius, std::abs(solver.eigenvalues()[i]));
  return radius;
}

inline bool is_stationary(const HawkesModel& m) {
  return spectral_radius(branching_matrix(m)) < 1.0;
}

// Long-run event rates per component, (I - A)^{-1} mu.
inline std::vector<double> stationary_rates(const HawkesModel& m) {
  const Eigen::MatrixXd a = branching_matrix(m);
  if (spectral_radius(a) >= 1.0)
    throw NumericalError("stationary rates of a non-stationary model");
  Eigen::VectorXd mu(m.dim);
  for (int i = 0; i < m.dim; ++i) mu[i] = m.mu[static_cast<std::size_t>(i)];
  Eigen::VectorXd r =
      (Eigen::MatrixXd::Identity(m.dim, m.dim) - a).partialPivLu().solve(mu);
  return {r.data(), r.data() + m.dim};
}

// Running excitation state S_ij = sum over past j-events of
// alpha_ij * exp(-beta_ij * (t - t_k)); advancing time decays every entry,
// an event of component j adds its amplitude column-wise.
class HawkesState {
 public:
  explicit HawkesState(const HawkesModel& m)
      : model_(&m), s_(static_cast<std::size_t>(m.dim) * m.dim, 0.0) {}

  void advance(double dt) {
    const int d = model_->dim;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        s_[static_cast<std::size_t>(i * d + j)] *=
            std::exp(-model_->b(i, j) * dt);
  }

  void add_event(int component) {
    const int d = model_->dim;
    for (int i = 0; i < d; ++i)
      s_[static_cast<std::size_t>(i * d + component)] +=
          model_->a(i, component);
  }

  double intensity(int i) const {
    const int d = model_->dim;
    double lam = model_->mu[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j)
      lam += s_[static_cast<std::size_t>(i * d + j)];
    return lam;
  }

  double total_intensity() const {
    double lam = 0.0;
    for (int i = 0; i < model_->dim; ++i) lam += intensity(i);
    return lam;
  }

 private:
  const HawkesModel* model_;
  std::vector<double> s_;
};

// Conditional intensity vector at time t given a history of events strictly
// before t, evaluated through the exponential recursion.
inline std::vector<double> intensity_at(const HawkesModel& m,
                                        std::span<const MarkedEvent> history,
                                        double t) {
  HawkesState state(m);
  double now = 0.0;
  for (const auto& ev : history) {
    if (!(ev.t < t)) throw DataError("history must lie strictly before t");
    state.advance(ev.t - now);
    state.add_event(ev.component);
    now = ev.t;
  }
  state.advance(t - now);
  std::vector<double> out(static_cast<std::size_t>(m.dim));
  for (int i = 0; i < m.dim; ++i) out[static_cast<std::size_t>(i)] = state.intensity(i);
  return out;
}

// Ogata thinning. Between events the exponential-kernel intensity only
// decays, so the intensity right after the previous step dominates and
// serves as the rejection bound.
inline std::vector<MarkedEvent> simulate(const HawkesModel& m, double horizon,
                                         SplitMix64& rng) {
  if (!(horizon >= 0.0)) throw DataError("horizon must be non-negative");
  if (!is_stationary(m))
    throw NumericalError("refusing to simulate a non-stationary model");
  std::vector<MarkedEvent> events;
  HawkesState state(m);
  std::vector<double> lambdas(static_cast<std::size_t>(m.dim), 0.0);
  double t = 0.0;
  while (true) {
    const double bound = state.total_intensity();
    if (!(bound > 0.0)) break;
    const double dt = exponential(rng, bound);
    if (t + dt > horizon) break;
    t += dt;
    state.advance(dt);
    for (int i = 0; i < m.dim; ++i)
      lambdas[static_cast<std::size_t>(i)] = state.intensity(i);
    double total = 0.0;
    for (double v : lambdas) total += v;
    if (uniform01(rng) * bound <= total) {
      const auto comp = discrete(rng, std::span<const double>(lambdas));
      const int c = comp < lambdas.size() ? static_cast<int>(comp) : m.dim - 1;
      events.push_back(MarkedEvent{t, c, 0});
      state.add_event(c);
    }
  }
  return events;
}

struct LogLikelihoodResult {
  double value = 0.0;
  // Gradient layout: mu (dim), then alpha row-major, then beta row-major.
  std::vector<double> gradient;
};

// Exact log-likelihood of an event sequence on [0, horizon], with its
// analytic gradient. Event terms use the running sums
//   R_ij(t) = sum_{t_k < t, c_k = j} exp(-beta_ij (t - t_k))
//   D_ij(t) = sum_{t_k < t, c_k = j} (t - t_k) exp(-beta_ij (t - t_k))
// which advance as R' = R e^{-b d}, D' = (D + d R) e^{-b d}.
inline LogLikelihoodResult log_likelihood(const HawkesModel& m,
                                          std::span<const MarkedEvent> events,
                                          double horizon) {
  const int d = m.dim;
  const auto dd = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  LogLikelihoodResult out;
  out.gradient.assign(static_cast<std::size_t>(d) + 2 * dd, 0.0);
  auto g_mu = [&](int i) -> double& { return out.gradient[static_cast<std::size_t>(i)]; };
  auto g_alpha = [&](int i, int j) -> double& {
    return out.gradient[static_cast<std::size_t>(d + i * d + j)];
  };
  auto g_beta = [&](int i, int j) -> double& {
    return out.gradient[static_cast<std::size_t>(d) + dd +
                        static_cast<std::size_t>(i * d + j)];
  };

  std::vector<double> r(dd, 0.0), dsum(dd, 0.0);
  double prev_t = 0.0;
  for (const auto& ev : events) {
    if (ev.t < prev_t) throw DataError("events must be sorted by time");
    if (ev.t > horizon) throw DataError("event beyond the horizon");
    const double delta = ev.t - prev_t;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto ij = static_cast<std::size_t>(i * d + j);
        const double decay = std::exp(-m.b(i, j) * delta);
        dsum[ij] = (dsum[ij] + delta * r[ij]) * decay;
        r[ij] *= decay;
      }
    const int c = ev.component;
    if (c < 0 || c >= d) throw DataError("event component out of range");
    double lam = m.mu[static_cast<std::size_t>(c)];
    for (int j = 0; j < d; ++j)
      lam += m.a(c, j) * r[static_cast<std::size_t>(c * d + j)];
    if (!(lam > 0.0)) {
      out.value = -std::numeric_limits<double>::infinity();
      return out;
    }
    out.value += std::log(lam);
    const double inv = 1.0 / lam;
    g_mu(c) += inv;
    for (int j = 0; j < d; ++j) {
      const auto cj = static_cast<std::size_t>(c * d + j);
      g_alpha(c, j) += r[cj] * inv;
      g_beta(c, j) -= m.a(c, j) * dsum[cj] * inv;
    }
    for (int i = 0; i < d; ++i) r[static_cast<std::size_t>(i * d + c)] += 1.0;
    prev_t = ev.t;
  }

  // Compensator over [0, horizon].
  for (int i = 0; i < d; ++i) {
    out.value -= m.mu[static_cast<std::size_t>(i)] * horizon;
    g_mu(i) -= horizon;
  }
  for (const auto& ev : events) {
    const double u = horizon - ev.t;
    const int j = ev.component;
    for (int i = 0; i < d; ++i) {
      const double b = m.b(i, j);
      const double a = m.a(i, j);
      const double e = std::exp(-b * u);
      const double integral = (1.0 - e) / b;
      out.value -= a * integral;
      g_alpha(i, j) -= integral;
      g_beta(i, j) -= a * (-integral / b + u * e / b);
    }
  }
  return out;
}

// Integrated intensity of one component between its consecutive events.
// Under the generating model these rescaled interarrivals are iid Exp(1).
inline std::vector<double> rescaled_interarrivals(
    const HawkesModel& m, std::span<const MarkedEvent> events, int component) {
  const int d = m.dim;
  const auto dd = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  std::vector<double> r(dd, 0.0);
  std::vector<double> out;
  double prev_t = 0.0;
  double compensator = 0.0;
  double last_mark = 0.0;
  bool seen = false;
  for (const auto& ev : events) {
    const double delta = ev.t - prev_t;
    // Advance the compensator of `component`, then decay the state.
    double inc = m.mu[static_cast<std::size_t>(component)] * delta;
    for (int j = 0; j < d; ++j) {
      const auto ij = static_cast<std::size_t>(component * d + j);
      const double b = m.b(component, j);
      inc += m.a(component, j) / b * (1.0 - std::exp(-b * delta)) * r[ij];
    }
    compensator += inc;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto ij = static_cast<std::size_t>(i * d + j);
        r[ij] *= std::exp(-m.b(i, j) * delta);
      }
    if (ev.component == component) {
      if (seen) out.push_back(compensator - last_mark);
      last_mark = compensator;
      seen = true;
    }
    for (int i = 0; i < d; ++i)
      r[static_cast<std::size_t>(i * d + ev.component)] += 1.0;
    prev_t = ev.t;
  }
  return out;
}

struct HawkesFitOptions {
  int max_iterations = 400;
  double grad_tolerance = 1e-5;  // on the scaled objective
  bool shared_beta = false;      // one decay for every pair
};

struct HawkesFitResult {
  HawkesModel model;
  double log_likelihood = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline HawkesModel default_fit_init(int dim, std::span<const MarkedEvent> events,
                                    double horizon) {
  std::vector<double> counts(static_cast<std::size_t>(dim), 0.0);
  for (const auto& ev : events) counts[static_cast<std::size_t>(ev.component)] += 1.0;
  std::vector<double> mu(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i)
    mu[static_cast<std::size_t>(i)] =
        std::max(0.7 * counts[static_cast<std::size_t>(i)] / horizon, 1e-4);
  std::vector<double> alpha(static_cast<std::size_t>(dim) * dim,
                            0.3 / static_cast<double>(dim));
  std::vector<double> beta(static_cast<std::size_t>(dim) * dim, 1.0);
  return make_hawkes(dim, std::move(mu), std::move(alpha), std::move(beta));
}

// One observed session: events on [0, horizon].
struct Realization {
  std::vector<MarkedEvent> events;
  double horizon = 0.0;
};

// Maximum likelihood fit in log-parameters, which keeps every baseline,
// amplitude and decay positive. Independent sessions contribute additively
// to the likelihood. Quality is judged by recovery tests, not by the
// optimizer's identity.
inline HawkesFitResult fit(int dim, std::span<const Realization> sessions,
                           std::optional<HawkesModel> init = std::nullopt,
                           const HawkesFitOptions& opt = {}) {
  std::size_t n_events = 0;
  double total_horizon = 0.0;
  {
    std::vector<bool> seen(static_cast<std::size_t>(dim), false);
    for (const auto& sess : sessions) {
      n_events += sess.events.size();
      total_horizon += sess.horizon;
      for (const auto& ev : sess.events) {
        if (ev.component < 0 || ev.component >= dim)
          throw DataError("event component out of range");
        seen[static_cast<std::size_t>(ev.component)] = true;
      }
    }
    for (bool s : seen)
      if (!s)
        throw DataError("every component must be observed at least once");
  }
  if (n_events == 0) throw DataError("cannot fit a Hawkes model to no events");
  HawkesModel start;
  if (init) {
    start = *init;
  } else {
    std::vector<MarkedEvent> pooled;
    for (const auto& sess : sessions)
      pooled.insert(pooled.end(), sess.events.begin(), sess.events.end());
    start = default_fit_init(dim, pooled, total_horizon);
  }
  const auto d = static_cast<std::size_t>(dim);
  const auto dd = d * d;
  const std::size_t n_params = opt.shared_beta ? d + dd + 1 : d + 2 * dd;
  const double scale = static_cast<double>(n_events);

  std::vector<double> x0(n_params);
  for (std::size_t i = 0; i < d; ++i) x0[i] = std::log(start.mu[i]);
  for (std::size_t ij = 0; ij < dd; ++ij)
    x0[d + ij] = std::log(std::max(start.alpha[ij], 1e-8));
  if (opt.shared_beta) {
    x0[d + dd] = std::log(start.beta[0]);
  } else {
    for (std::size_t ij = 0; ij < dd; ++ij)
      x0[d + dd + ij] = std::log(start.beta[ij]);
  }

  auto unpack = [&](std::span<const double> x) {
    HawkesModel m;
    m.dim = dim;
    m.mu.resize(d);
    m.alpha.resize(dd);
    m.beta.resize(dd);
    for (std::size_t i = 0; i < d; ++i) m.mu[i] = std::exp(x[i]);
    for (std::size_t ij = 0; ij < dd; ++ij) m.alpha[ij] = std::exp(x[d + ij]);
    for (std::size_t ij = 0; ij < dd; ++ij)
      m.beta[ij] = std::exp(opt.shared_beta ? x[d + dd] : x[d + dd + ij]);
    return m;
  };

  auto objective = [&](std::span<const double> x, std::span<double> grad) {
    const HawkesModel m = unpack(x);
    double value = 0.0;
    std::vector<double> g_sum(d + 2 * dd, 0.0);
    for (const auto& sess : sessions) {
      const auto ll = log_likelihood(m, sess.events, sess.horizon);
      if (!std::isfinite(ll.value)) {
        for (auto& g : grad) g = 0.0;
        return std::numeric_limits<double>::infinity();
      }
      value += ll.value;
      for (std::size_t p = 0; p < g_sum.size(); ++p) g_sum[p] += ll.gradient[p];
    }
    for (std::size_t i = 0; i < d; ++i) grad[i] = -m.mu[i] * g_sum[i] / scale;
    for (std::size_t ij = 0; ij < dd; ++ij)
      grad[d + ij] = -m.alpha[ij] * g_sum[d + ij] / scale;
    if (opt.shared_beta) {
      double g = 0.0;
      for (std::size_t ij = 0; ij < dd; ++ij)
        g += m.beta[ij] * g_sum[d + dd + ij];
      grad[d + dd] = -g / scale;
    } else {
      for (std::size_t ij = 0; ij < dd; ++ij)
        grad[d + dd + ij] = -m.beta[ij] * g_sum[d + dd + ij] / scale;
    }
    return -value / scale;
  };

  OptimOptions oo;
  oo.max_iterations = opt.max_iterations;
  oo.grad_tolerance = opt.grad_tolerance;
  const OptimResult r = minimize_lbfgs(objective, std::move(x0), oo);

  HawkesFitResult out;
  out.model = unpack(std::span<const double>(r.x));
  out.log_likelihood = -r.fx * scale;
  out.grad_norm = r.grad_norm;
  out.iterations = r.iterations;
  out.converged = r.converged;
  return out;
}

inline HawkesFitResult fit(int dim, std::span<const MarkedEvent> events,
                           double horizon,
                           std::optional<HawkesModel> init = std::nullopt,
                           const HawkesFitOptions& opt = {}) {
  std::vector<Realization> sessions(1);
  sessions[0].events.assign(events.begin(), events.end());
  sessions[0].horizon = horizon;
  return fit(dim, std::span<const Realization>(sessions), std::move(init), opt);
}

}  // namespace qrlob
