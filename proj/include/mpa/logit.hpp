#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mpa/errors.hpp"

namespace mpa {

// Numerically stable logistic function.
inline double logistic(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) {
  if (t > 35) return t;
  if (t < -35) return std::exp(t);
  return std::log1p(std::exp(t));
}

struct LogitFit {
  double beta0 = 0;
  double beta1 = 0;
  double se0 = 0;
  double se1 = 0;
  double log_likelihood = 0;
  double null_log_likelihood = 0;
  double mcfadden_r2 = 0;
  size_t n_observations = 0;
  bool converged = false;
  int iterations = 0;
};

inline double predict_prob(const LogitFit& fit, double x) {
  return logistic(fit.beta0 + fit.beta1 * x);
}

// Significance stars at the usual 0.05 / 0.01 / 0.001 levels, from the Wald
// z statistic.
inline std::string significance_stars(double beta, double se) {
  if (se <= 0) return "";
  const double z = std::fabs(beta / se);
  if (z >= 3.2905) return "***";  // p <= 0.001
  if (z >= 2.5758) return "**";   // p <= 0.01
  if (z >= 1.9600) return "*";    // p <= 0.05
  return "";
}

namespace logit_detail {

inline double log_likelihood(const std::vector<double>& x, const std::vector<int>& y,
                             double b0, double b1) {
  double ll = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double t = b0 + b1 * x[i];
    ll += y[i] ? t - log1pexp(t) : -log1pexp(t);
  }
  return ll;
}

}  // namespace logit_detail

// Maximum-likelihood logit of binary y on [1, x] via Newton iterations with
// step halving. Standard errors from the inverse observed information.
inline LogitFit fit_logit(const std::vector<double>& x, const std::vector<int>& y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw DomainError("need >= 2 aligned observations");
  size_t ones = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) throw DomainError("non-finite predictor value");
    ones += y[i] != 0;
  }
  if (ones == 0 || ones == n)
    throw SeparationError("outcome has a single class; the likelihood has no maximum");

  // With one predictor, perfect separation is exactly a threshold between the
  // classes: the likelihood supremum is then not attained at finite beta.
  double max0 = -std::numeric_limits<double>::infinity(), min0 = -max0;
  double max1 = max0, min1 = min0;
  for (size_t i = 0; i < n; ++i) {
    (y[i] ? max1 : max0) = std::max(y[i] ? max1 : max0, x[i]);
    (y[i] ? min1 : min0) = std::min(y[i] ? min1 : min0, x[i]);
  }
  if (min1 > max0 || min0 > max1)
    throw SeparationError("classes are perfectly separated by the predictor");

  LogitFit fit;
  fit.n_observations = n;

  // intercept-only model has a closed form
  const double p_bar = static_cast<double>(ones) / n;
  fit.null_log_likelihood =
      n * (p_bar * std::log(p_bar) + (1 - p_bar) * std::log(1 - p_bar));

  double b0 = std::log(p_bar / (1 - p_bar));
  double b1 = 0;
  double ll = logit_detail::log_likelihood(x, y, b0, b1);
  constexpr int kMaxIter = 100;
  int it = 0;
  for (; it < kMaxIter; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (size_t i = 0; i < n; ++i) {
      const double p = logistic(b0 + b1 * x[i]);
      const double r = y[i] - p;
      const double w = p * (1 - p);
      g0 += r;
      g1 += r * x[i];
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
    }
    const double gnorm = std::sqrt(g0 * g0 + g1 * g1);
    if (gnorm < 1e-8) {
      fit.converged = true;
      break;
    }
    const double det = h00 * h11 - h01 * h01;
    if (det <= 0 || !std::isfinite(det))
      throw SeparationError("singular information matrix (quasi-separation)");
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    // step halving: a Newton step must not decrease the likelihood
    double step = 1.0;
    double nb0 = b0 + d0, nb1 = b1 + d1;
    double nll = logit_detail::log_likelihood(x, y, nb0, nb1);
    int halvings = 0;
    while (nll < ll && halvings < 50) {
      step *= 0.5;
      nb0 = b0 + step * d0;
      nb1 = b1 + step * d1;
      nll = logit_detail::log_likelihood(x, y, nb0, nb1);
      ++halvings;
    }
    const double rel = std::fabs(nll - ll) / (std::fabs(ll) + 1e-30);
    b0 = nb0;
    b1 = nb1;
    ll = nll;
    if (rel < 1e-10) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = it;
  if (std::fabs(b0) > 50 || std::fabs(b1) > 50)
    throw SeparationError("divergent coefficients (perfect or quasi separation)");

  // observed information at the optimum
  double h00 = 0, h01 = 0, h11 = 0;
  for (size_t i = 0; i < n; ++i) {
    const double p = logistic(b0 + b1 * x[i]);
    const double w = p * (1 - p);
    h00 += w;
    h01 += w * x[i];
    h11 += w * x[i] * x[i];
  }
  const double det = h00 * h11 - h01 * h01;
  fit.beta0 = b0;
  fit.beta1 = b1;
  if (det > 0) {
    fit.se0 = std::sqrt(h11 / det);
    fit.se1 = std::sqrt(h00 / det);
  }
  fit.log_likelihood = ll;
  fit.mcfadden_r2 = 1.0 - ll / fit.null_log_likelihood;
  if (fit.mcfadden_r2 < 0) fit.mcfadden_r2 = 0;  // guard against roundoff
  return fit;
}

}  // namespace mpa
