#pragma once

// Binary nu-support-vector classifier with an RBF kernel, solved by SMO with
// the nu-specific working-set selection (positives and negatives are updated
// within their own group so both equality constraints stay satisfied).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "mmner/core.hpp"

namespace mmner {

struct NuSvmParams {
  double nu = 0.5;
  double gamma = 0.1;
  double eps = 1e-3;
  std::size_t max_iter = 10'000'000;
};

struct RbfSvmModel {
  double gamma = 0.1;
  double rho = 0.0;
  std::size_t dim = 0;
  std::vector<double> coef;              // y_i * alpha_i, one per support vector
  std::vector<double> support_vectors;   // row-major, coef.size() x dim

  double decision(std::span<const double> x) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < coef.size(); ++s) {
      const double* sv = support_vectors.data() + s * dim;
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        double t = sv[j] - x[j];
        d2 += t * t;
      }
      sum += coef[s] * std::exp(-gamma * d2);
    }
    return sum - rho;
  }
};

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double t = a[j] - b[j];
    d2 += t * t;
  }
  return std::exp(-gamma * d2);
}

/// Rows of `x` are samples; labels are +1/-1.
inline RbfSvmModel train_nu_svm(const std::vector<std::vector<double>>& x,
                                const std::vector<int>& y, const NuSvmParams& params = {}) {
  const std::size_t l = x.size();
  if (l == 0 || y.size() != l) throw TrainingError("nu-SVM: empty or mismatched training set");
  const std::size_t dim = x[0].size();
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < l; ++i) {
    if (x[i].size() != dim) throw TrainingError("nu-SVM: ragged feature rows");
    if (y[i] == 1)
      ++n_pos;
    else if (y[i] == -1)
      ++n_neg;
    else
      throw TrainingError("nu-SVM: labels must be +1/-1");
  }
  if (n_pos == 0 || n_neg == 0) throw TrainingError("nu-SVM: training data has a single class");
  if (params.nu <= 0.0 || params.nu * static_cast<double>(l) / 2.0 >
                              static_cast<double>(std::min(n_pos, n_neg)))
    throw TrainingError("nu-SVM: nu=" + std::to_string(params.nu) + " infeasible for " +
                        std::to_string(n_pos) + " positives / " + std::to_string(n_neg) +
                        " negatives");

  // Q_ij = y_i y_j K(x_i, x_j)
  std::vector<double> q(l * l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = i; j < l; ++j) {
      double v = y[i] * y[j] * rbf_kernel(x[i], x[j], params.gamma);
      q[i * l + j] = v;
      q[j * l + i] = v;
    }
  auto Q = [&](std::size_t i, std::size_t j) { return q[i * l + j]; };

  constexpr double kUpper = 1.0;
  constexpr double kTau = 1e-12;
  std::vector<double> alpha(l, 0.0);
  double sum_pos = params.nu * static_cast<double>(l) / 2.0;
  double sum_neg = sum_pos;
  for (std::size_t i = 0; i < l; ++i) {
    double& budget = y[i] == 1 ? sum_pos : sum_neg;
    alpha[i] = std::min(kUpper, budget);
    budget -= alpha[i];
  }
  std::vector<double> grad(l, 0.0);
  for (std::size_t i = 0; i < l; ++i)
    if (alpha[i] != 0.0)
      for (std::size_t k = 0; k < l; ++k) grad[k] += alpha[i] * Q(i, k);

  auto at_upper = [&](std::size_t i) { return alpha[i] >= kUpper; };
  auto at_lower = [&](std::size_t i) { return alpha[i] <= 0.0; };
  constexpr double kInf = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
    double gmaxp = -kInf, gmaxn = -kInf;
    std::ptrdiff_t ip = -1, in = -1;
    for (std::size_t t = 0; t < l; ++t) {
      if (y[t] == 1) {
        if (!at_upper(t) && -grad[t] >= gmaxp) gmaxp = -grad[t], ip = static_cast<std::ptrdiff_t>(t);
      } else {
        if (!at_lower(t) && grad[t] >= gmaxn) gmaxn = grad[t], in = static_cast<std::ptrdiff_t>(t);
      }
    }
    double gmaxp2 = -kInf, gmaxn2 = -kInf, obj_min = kInf;
    std::ptrdiff_t jmin = -1;
    for (std::size_t j = 0; j < l; ++j) {
      if (y[j] == 1) {
        if (at_lower(j)) continue;
        gmaxp2 = std::max(gmaxp2, grad[j]);
        if (ip < 0) continue;
        double gd = gmaxp + grad[j];
        if (gd > 0) {
          double quad = Q(ip, ip) + Q(j, j) - 2.0 * Q(ip, j);
          double obj = -(gd * gd) / (quad > 0 ? quad : kTau);
          if (obj <= obj_min) jmin = static_cast<std::ptrdiff_t>(j), obj_min = obj;
        }
      } else {
        if (at_upper(j)) continue;
        gmaxn2 = std::max(gmaxn2, -grad[j]);
        if (in < 0) continue;
        double gd = gmaxn - grad[j];
        if (gd > 0) {
          double quad = Q(in, in) + Q(j, j) - 2.0 * Q(in, j);
          double obj = -(gd * gd) / (quad > 0 ? quad : kTau);
          if (obj <= obj_min) jmin = static_cast<std::ptrdiff_t>(j), obj_min = obj;
        }
      }
    }
    if (std::max(gmaxp + gmaxp2, gmaxn + gmaxn2) < params.eps || jmin < 0) break;

    const std::size_t j = static_cast<std::size_t>(jmin);
    const std::size_t i = static_cast<std::size_t>(y[j] == 1 ? ip : in);
    const double old_i = alpha[i], old_j = alpha[j];
    double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
    if (quad <= 0) quad = kTau;
    double delta = (grad[i] - grad[j]) / quad;
    double sum = alpha[i] + alpha[j];
    alpha[i] -= delta;
    alpha[j] += delta;
    if (sum > kUpper) {
      if (alpha[i] > kUpper) alpha[i] = kUpper, alpha[j] = sum - kUpper;
    } else if (alpha[j] < 0) {
      alpha[j] = 0, alpha[i] = sum;
    }
    if (sum > kUpper) {
      if (alpha[j] > kUpper) alpha[j] = kUpper, alpha[i] = sum - kUpper;
    } else if (alpha[i] < 0) {
      alpha[i] = 0, alpha[j] = sum;
    }
    double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t k = 0; k < l; ++k) grad[k] += Q(i, k) * di + Q(j, k) * dj;
  }

  // rho and the scaling factor r from free variables of each group
  double ub1 = kInf, lb1 = -kInf, sum1 = 0, ub2 = kInf, lb2 = -kInf, sum2 = 0;
  std::size_t free1 = 0, free2 = 0;
  for (std::size_t i = 0; i < l; ++i) {
    double& ub = y[i] == 1 ? ub1 : ub2;
    double& lb = y[i] == 1 ? lb1 : lb2;
    if (at_upper(i))
      lb = std::max(lb, grad[i]);
    else if (at_lower(i))
      ub = std::min(ub, grad[i]);
    else if (y[i] == 1)
      ++free1, sum1 += grad[i];
    else
      ++free2, sum2 += grad[i];
  }
  double r1 = free1 > 0 ? sum1 / static_cast<double>(free1) : (ub1 + lb1) / 2;
  double r2 = free2 > 0 ? sum2 / static_cast<double>(free2) : (ub2 + lb2) / 2;
  double r = (r1 + r2) / 2;
  if (!(r > 0) || !std::isfinite(r)) throw TrainingError("nu-SVM: degenerate solution (r <= 0)");

  RbfSvmModel m;
  m.gamma = params.gamma;
  m.dim = dim;
  m.rho = ((r1 - r2) / 2) / r;
  for (std::size_t i = 0; i < l; ++i) {
    if (alpha[i] <= 0.0) continue;
    m.coef.push_back(y[i] * alpha[i] / r);
    m.support_vectors.insert(m.support_vectors.end(), x[i].begin(), x[i].end());
  }
  return m;
}

}  // namespace mmner
