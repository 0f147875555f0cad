#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace nstep::stats {

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz's method).
inline double ibeta_cf(double a, double b, double x) {
  const double eps = 3e-16;
  const double fpmin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 1000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

// lgamma(z + 1/2) - lgamma(z). The direct difference loses ~z*1e-16 of
// absolute precision, so large z uses the asymptotic Wallis-ratio series.
inline double lgamma_half_ratio(double z) {
  if (z < 500.0) return std::lgamma(z + 0.5) - std::lgamma(z);
  const double zi = 1.0 / z;
  return 0.5 * std::log(z) +
         std::log1p(zi * (-1.0 / 8.0 + zi * (1.0 / 128.0 + zi * (5.0 / 1024.0 - zi * 21.0 / 32768.0))));
}

// I_x(a, 1/2); cx must equal 1-x, passed separately so callers can supply it
// without cancellation.
inline double ibeta_reg_half(double a, double x, double cx) {
  if (x <= 0.0) return 0.0;
  if (cx <= 0.0) return 1.0;
  const double b = 0.5;
  // ln B(a, 1/2) = lgamma(1/2) - (lgamma(a + 1/2) - lgamma(a))
  const double ln_beta = 0.57236494292470009 - lgamma_half_ratio(a);
  const double ln_front = a * std::log(x) + b * std::log(cx) - ln_beta;
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * ibeta_cf(a, b, x) / a;
  }
  return 1.0 - front * ibeta_cf(b, a, cx) / b;
}

}  // namespace detail

// Student-t CDF.
inline double t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("t_cdf: dof must be > 0");
  if (x == 0.0) return 0.5;
  const double x2 = x * x;
  const double u = dof / (dof + x2);
  const double cu = x2 / (dof + x2);
  const double tail = 0.5 * detail::ibeta_reg_half(0.5 * dof, u, cu);
  return x > 0.0 ? 1.0 - tail : tail;
}

// Inverse CDF by bisection (t_cdf is strictly increasing).
inline double t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("t_quantile: p must be in (0,1)");
  if (p == 0.5) return 0.0;
  double lo = 0.0, hi = 1.0;
  const double target = p > 0.5 ? p : 1.0 - p;
  while (t_cdf(hi, dof) < target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (t_cdf(mid, dof) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-13 * (1.0 + hi)) break;
  }
  const double q = 0.5 * (lo + hi);
  return p > 0.5 ? q : -q;
}

struct SummaryStats {
  int n_samples = 0;
  double mean = 0.0;
  double sample_sd = 0.0;  // n-1 denominator
  double ci_low = 0.0;     // 95% two-sided, Student-t
  double ci_high = 0.0;
};

struct WelchResult {
  double t_stat = 0.0;
  double dof = 0.0;  // Welch-Satterthwaite, real-valued
  double p_value = 0.0;  // two-sided
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd_of(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline SummaryStats summarize(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("summarize: need at least 2 samples");
  SummaryStats s;
  s.n_samples = static_cast<int>(values.size());
  s.mean = mean_of(values);
  s.sample_sd = sample_sd_of(values, s.mean);
  const double half = t_quantile(0.975, static_cast<double>(s.n_samples - 1)) * s.sample_sd /
                      std::sqrt(static_cast<double>(s.n_samples));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  return s;
}

enum class Window { First50, Last50, All };

inline const char* window_name(Window w) {
  switch (w) {
    case Window::First50: return "first50";
    case Window::Last50: return "last50";
    case Window::All: return "all";
  }
  return "?";
}

// Mean episode return over the chosen window of one run.
inline double window_mean(const std::vector<double>& returns, Window w) {
  const std::size_t n = returns.size();
  std::size_t lo = 0, hi = n;
  if (w != Window::All) {
    if (n < 50) throw std::invalid_argument("window_mean: need at least 50 episodes");
    if (w == Window::First50) {
      hi = 50;
    } else {
      lo = n - 50;
    }
  } else if (n == 0) {
    throw std::invalid_argument("window_mean: empty record list");
  }
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += returns[i];
  return s / static_cast<double>(hi - lo);
}

inline WelchResult welch_test_from_summary(double mean_a, double sd_a, int n_a, double mean_b,
                                           double sd_b, int n_b) {
  if (n_a < 2 || n_b < 2) throw std::invalid_argument("welch_test: need at least 2 samples per side");
  if (sd_a == 0.0 && sd_b == 0.0) {
    throw std::invalid_argument("welch_test: both variances are zero");
  }
  const double va = sd_a * sd_a / static_cast<double>(n_a);
  const double vb = sd_b * sd_b / static_cast<double>(n_b);
  WelchResult r;
  r.t_stat = (mean_a - mean_b) / std::sqrt(va + vb);
  r.dof = (va + vb) * (va + vb) /
          (va * va / static_cast<double>(n_a - 1) + vb * vb / static_cast<double>(n_b - 1));
  r.p_value = 2.0 * (1.0 - t_cdf(std::abs(r.t_stat), r.dof));
  return r;
}

inline WelchResult welch_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_test: need at least 2 samples per side");
  }
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  return welch_test_from_summary(ma, sample_sd_of(a, ma), static_cast<int>(a.size()), mb,
                                 sample_sd_of(b, mb), static_cast<int>(b.size()));
}

}  // namespace nstep::stats
