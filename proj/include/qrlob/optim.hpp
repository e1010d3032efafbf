#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace qrlob {

struct OptimOptions {
  int max_iterations = 500;
  int history = 8;
  double grad_tolerance = 1e-6;
  double initial_step = 1.0;
  int max_line_search = 50;
};

struct OptimResult {
  std::vector<double> x;
  double fx = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }
}  // namespace detail

// Limited-memory BFGS minimizer with Armijo backtracking. The objective is
// `double f(span<const double> x, span<double> grad)` writing the gradient
// in place. Falls back to the steepest-descent direction whenever the
// curvature pairs degenerate.
template <typename F>
OptimResult minimize_lbfgs(F&& f, std::vector<double> x0,
                           const OptimOptions& opt = {}) {
  const std::size_t n = x0.size();
  OptimResult res;
  res.x = std::move(x0);
  std::vector<double> grad(n, 0.0), new_x(n, 0.0), new_grad(n, 0.0);
  res.fx = f(std::span<const double>(res.x), std::span<double>(grad));
  res.grad_norm = detail::norm(grad);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.iterations = iter;
    if (res.grad_norm <= opt.grad_tolerance) {
      res.converged = true;
      return res;
    }

    // Two-loop recursion for the search direction.
    std::vector<double> q = grad;
    std::vector<double> alpha(s_hist.size(), 0.0);
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * detail::dot(s_hist[i], q);
      for (std::size_t j = 0; j < n; ++j) q[j] -= alpha[i] * y_hist[i][j];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      const double yy = detail::dot(y_hist.back(), y_hist.back());
      if (yy > 0.0) gamma = detail::dot(s_hist.back(), y_hist.back()) / yy;
    }
    for (auto& v : q) v *= gamma;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * detail::dot(y_hist[i], q);
      for (std::size_t j = 0; j < n; ++j)
        q[j] += (alpha[i] - beta) * s_hist[i][j];
    }
    // q approximates H * grad; descend along -q.
    double dir_dot_grad = -detail::dot(q, grad);
    if (!(dir_dot_grad < 0.0)) {
      q = grad;
      dir_dot_grad = -detail::dot(grad, grad);
    }

    double step = opt.initial_step;
    bool accepted = false;
    double new_fx = res.fx;
    for (int ls = 0; ls < opt.max_line_search; ++ls) {
      for (std::size_t j = 0; j < n; ++j) new_x[j] = res.x[j] - step * q[j];
      new_fx = f(std::span<const double>(new_x), std::span<double>(new_grad));
      if (std::isfinite(new_fx) &&
          new_fx <= res.fx + 1e-4 * step * dir_dot_grad) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) return res;  // stuck; report the best point found

    std::vector<double> s(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = new_x[j] - res.x[j];
      y[j] = new_grad[j] - grad[j];
    }
    const double sy = detail::dot(s, y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (std::ssize(s_hist) > opt.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.x = new_x;
    res.fx = new_fx;
    grad = new_grad;
    res.grad_norm = detail::norm(grad);
  }
  res.converged = res.grad_norm <= opt.grad_tolerance;
  return res;
}

}  // namespace qrlob
