#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "npcnet/cohort.hpp"
#include "npcnet/stats.hpp"

namespace npcnet {

struct LogisticFit {
  std::vector<std::string> terms;  // "(intercept)" first
  std::vector<double> beta;
  std::vector<double> se;
  std::vector<double> z;
  std::vector<double> p;
  std::vector<double> odds_ratio;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<std::vector<double>> covariance;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation_suspected = false;
};

namespace detail {

inline double log1pexp(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double bernoulli_log_likelihood(const Eigen::VectorXd& eta,
                                       const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += y(i) * eta(i) - log1pexp(eta(i));
  }
  return ll;
}

}  // namespace detail

inline constexpr double kZ975 = 1.959963984540054;  // standard-normal 97.5% quantile

// IRLS with step-halving; covariance is the inverse Fisher information at the
// optimum. The design matrix is passed without the intercept, which is
// prepended here.
inline LogisticFit fit_logistic(const std::vector<std::vector<double>>& covariates,
                                const std::vector<int>& outcomes,
                                const std::vector<std::string>& names,
                                int max_iter = 100, double tol = 1e-8) {
  const std::size_t n = outcomes.size();
  if (covariates.size() != n) {
    throw std::invalid_argument("fit_logistic: one covariate row per outcome");
  }
  if (n == 0) throw std::invalid_argument("fit_logistic: empty data");
  const std::size_t q = covariates.front().size();
  if (names.size() != q) {
    throw std::invalid_argument("fit_logistic: one name per covariate column");
  }
  const std::size_t p = q + 1;

  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (outcomes[i] != 0 && outcomes[i] != 1) {
      throw std::invalid_argument("fit_logistic: outcomes must be 0/1");
    }
    if (covariates[i].size() != q) {
      throw std::invalid_argument("fit_logistic: ragged covariate rows");
    }
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j < q; ++j) X(i, j + 1) = covariates[i][j];
    y(i) = outcomes[i];
  }

  LogisticFit fit;
  fit.terms.push_back("(intercept)");
  for (const auto& name : names) fit.terms.push_back(name);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank < static_cast<Eigen::Index>(p)) {
    std::string collinear;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < static_cast<Eigen::Index>(p); ++j) {
      if (!collinear.empty()) collinear += ", ";
      collinear += fit.terms[perm(j)];
    }
    throw std::invalid_argument("fit_logistic: design matrix is rank deficient (" +
                                collinear + ")");
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = X * beta;
  double ll = detail::bernoulli_log_likelihood(eta, y);
  Eigen::MatrixXd info(p, p);

  for (int iter = 1; iter <= max_iter; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd mu(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
    }
    Eigen::VectorXd score = X.transpose() * (y - mu);
    if (score.lpNorm<Eigen::Infinity>() < tol) {
      fit.converged = true;
      break;
    }
    info = X.transpose() * w.asDiagonal() * X;
    Eigen::VectorXd delta = info.ldlt().solve(score);

    double step = 1.0;
    while (step > 1e-10) {
      Eigen::VectorXd candidate = beta + step * delta;
      Eigen::VectorXd eta_new = X * candidate;
      const double ll_new = detail::bernoulli_log_likelihood(eta_new, y);
      if (ll_new >= ll - 1e-12) {
        beta = candidate;
        eta = eta_new;
        ll = ll_new;
        break;
      }
      step *= 0.5;
    }
    if (step <= 1e-10) break;  // no uphill step exists
  }

  {
    Eigen::VectorXd mu(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
    }
    info = X.transpose() * w.asDiagonal() * X;
  }
  Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  fit.log_likelihood = ll;
  fit.separation_suspected =
      !fit.converged || beta.lpNorm<Eigen::Infinity>() > 15.0;
  fit.covariance.assign(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) fit.covariance[i][j] = cov(i, j);
  for (std::size_t j = 0; j < p; ++j) {
    const double b = beta(j);
    const double s = std::sqrt(std::max(cov(j, j), 0.0));
    fit.beta.push_back(b);
    fit.se.push_back(s);
    fit.z.push_back(s > 0.0 ? b / s : 0.0);
    fit.p.push_back(s > 0.0 ? stats::normal_two_sided_p(b / s) : 1.0);
    fit.odds_ratio.push_back(std::exp(b));
    fit.ci_low.push_back(std::exp(b - kZ975 * s));
    fit.ci_high.push_back(std::exp(b + kZ975 * s));
  }
  return fit;
}

struct TreatmentFit {
  LogisticFit fit;
  std::vector<std::string> terms;  // covariates without the intercept
  std::size_t n = 0;
  std::size_t dropped_missing_adjuster = 0;
  bool non_estimable = false;
  bool low_power = false;
};

// Per-phenotype model of in-hospital death on fluid volume, vasopressor delay,
// and the configured adjusters. "sofa6" resolves from the SOFA series when the
// treatment record lacks it.
inline TreatmentFit treatment_model(const std::vector<Episode>& episodes,
                                    const std::vector<std::string>& adjusters) {
  TreatmentFit out;
  out.terms = {"iv_fluid_volume_l", "time_to_vasopressor_hours"};
  out.terms.insert(out.terms.end(), adjusters.begin(), adjusters.end());

  std::vector<std::vector<double>> rows;
  std::vector<int> deaths;
  for (const auto& ep : episodes) {
    if (!ep.treatment) {
      throw std::invalid_argument("treatment_model: episode without treatment record");
    }
    const TreatmentRecord& t = *ep.treatment;
    std::vector<double> row = {t.iv_fluid_volume_liters, t.time_to_vasopressor_hours};
    bool missing = false;
    for (const auto& name : adjusters) {
      auto it = t.adjusters.find(name);
      if (it != t.adjusters.end()) {
        row.push_back(it->second);
      } else if (name == "sofa6") {
        if (auto s = ep.sofa_at(6)) {
          row.push_back(*s);
        } else {
          missing = true;
          break;
        }
      } else {
        throw std::invalid_argument("treatment_model: unknown adjuster '" + name + "'");
      }
    }
    if (missing) {
      ++out.dropped_missing_adjuster;
      continue;
    }
    rows.push_back(std::move(row));
    deaths.push_back(t.in_hospital_death ? 1 : 0);
  }

  out.n = rows.size();
  const std::size_t p = out.terms.size() + 1;
  out.low_power = out.n < 10 * p;
  const bool any_death = std::find(deaths.begin(), deaths.end(), 1) != deaths.end();
  const bool any_survivor = std::find(deaths.begin(), deaths.end(), 0) != deaths.end();
  if (rows.empty() || !any_death || !any_survivor) {
    out.non_estimable = true;
    return out;
  }
  out.fit = fit_logistic(rows, deaths, out.terms);
  return out;
}

struct EValueResult {
  double e_value_point = 1.0;
  double e_value_ci_limit = 1.0;
  double odds_ratio = 1.0;
  double ci_bound_used = 1.0;  // 1 when the CI crosses the null
};

namespace detail {

inline double e_value_from_rr(double rr) {
  if (rr < 1.0) rr = 1.0 / rr;
  if (rr <= 1.0) return 1.0;
  return rr + std::sqrt(rr * (rr - 1.0));
}

}  // namespace detail

// Common-outcome approximation: RR = sqrt(OR), then E = RR + sqrt(RR(RR-1)).
inline double e_value_point(double odds_ratio) {
  if (odds_ratio <= 0.0) throw std::invalid_argument("e_value: odds ratio must be positive");
  return detail::e_value_from_rr(std::sqrt(odds_ratio));
}

// The CI limit uses the bound closer to the null; 1 when the CI crosses 1.
inline EValueResult e_value(double odds_ratio, double ci_low, double ci_high) {
  if (odds_ratio <= 0.0 || ci_low <= 0.0 || ci_high <= 0.0) {
    throw std::invalid_argument("e_value: odds ratio and CI must be positive");
  }
  if (ci_low > ci_high) throw std::invalid_argument("e_value: CI bounds out of order");
  EValueResult res;
  res.odds_ratio = odds_ratio;
  res.e_value_point = e_value_point(odds_ratio);
  if (ci_low > 1.0) {
    res.ci_bound_used = ci_low;
  } else if (ci_high < 1.0) {
    res.ci_bound_used = ci_high;
  } else {
    res.ci_bound_used = 1.0;
  }
  res.e_value_ci_limit =
      res.ci_bound_used == 1.0 ? 1.0 : detail::e_value_from_rr(std::sqrt(res.ci_bound_used));
  return res;
}

}  // namespace npcnet
