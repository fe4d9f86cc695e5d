#include "kmfv/detmath.hpp"

#include <cmath>
#include <limits>

namespace kmfv::detmath {

namespace {

// ln(2) split into a high part exact in double and a low correction term.
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kLog2E = 1.44269504088896338700e+00;
constexpr double kInvSqrtPi = 5.64189583547756286948e-01; // 1/sqrt(pi)
constexpr double kSqrt1_2 = 7.07106781186547524401e-01;   // 1/sqrt(2)
constexpr double kInvSqrt2Pi = 3.98942280401432677940e-01;

} // namespace

double exp_d(double x) {
  if (x != x) return x;
  if (x > 709.0) return std::numeric_limits<double>::infinity();
  if (x < -745.0) return 0.0;

  // x = k*ln2 + r, |r| <= ln2/2
  double kd = x * kLog2E;
  kd = (kd >= 0.0) ? static_cast<double>(static_cast<long long>(kd + 0.5))
                   : static_cast<double>(static_cast<long long>(kd - 0.5));
  const int k = static_cast<int>(kd);
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;

  // Taylor series of exp(r); |r| <= 0.347 so 13 terms reach ~1e-16 relative.
  double term = 1.0;
  double sum = 1.0;
  for (int n = 1; n <= 13; ++n) {
    term = term * r / static_cast<double>(n);
    sum += term;
  }
  return std::ldexp(sum, k);
}

double log_d(double x) {
  if (x != x) return x;
  if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x == std::numeric_limits<double>::infinity()) return x;

  int e = 0;
  double m = std::frexp(x, &e); // m in [0.5, 1)
  if (m < kSqrt1_2) {
    m *= 2.0;
    e -= 1;
  }
  // log(m) = 2*atanh(s), s = (m-1)/(m+1), |s| <= 0.1716
  const double s = (m - 1.0) / (m + 1.0);
  const double s2 = s * s;
  double term = s;
  double sum = s;
  for (int n = 3; n <= 19; n += 2) {
    term *= s2;
    sum += term / static_cast<double>(n);
  }
  const double ed = static_cast<double>(e);
  return (ed * kLn2Hi + 2.0 * sum) + ed * kLn2Lo;
}

double log1p_d(double x) {
  if (x > -0.25 && x < 0.25) {
    // atanh form again, s = x/(2+x)
    const double s = x / (2.0 + x);
    const double s2 = s * s;
    double term = s;
    double sum = s;
    for (int n = 3; n <= 19; n += 2) {
      term *= s2;
      sum += term / static_cast<double>(n);
    }
    return 2.0 * sum;
  }
  return log_d(1.0 + x);
}

double erf_d(double x) {
  if (x != x) return x;
  const bool neg = x < 0.0;
  const double a = neg ? -x : x;
  double r;
  if (a < 2.0) {
    // Alternating Maclaurin series; worst cancellation at a=2 keeps
    // ~1e-14 absolute accuracy.
    const double a2 = a * a;
    double term = a;
    double sum = a;
    for (int n = 1; n <= 60; ++n) {
      term *= -a2 / static_cast<double>(n);
      const double add = term / static_cast<double>(2 * n + 1);
      sum += add;
      if (sum + add == sum) break;
    }
    r = 2.0 * kInvSqrtPi * sum;
  } else {
    r = 1.0 - erfc_d(a);
  }
  return neg ? -r : r;
}

double erfc_d(double x) {
  if (x != x) return x;
  if (x < 2.0) return 1.0 - erf_d(x);
  if (x > 27.0) return 0.0; // below double denormal range

  // Laplace continued fraction, evaluated with the modified Lentz scheme:
  // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
  const double tiny = 1e-300;
  double f = x;
  double c = x;
  double d = 0.0;
  for (int n = 1; n <= 300; ++n) {
    const double an = 0.5 * static_cast<double>(n);
    d = x + an * d;
    if (d == 0.0) d = tiny;
    c = x + an / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (delta == 1.0) break;
  }
  return exp_d(-x * x) * kInvSqrtPi / f;
}

double tanh_d(double x) {
  if (x != x) return x;
  if (x > 20.0) return 1.0;
  if (x < -20.0) return -1.0;
  const bool neg = x < 0.0;
  const double a = neg ? -x : x;
  const double e = exp_d(2.0 * a);
  const double r = 1.0 - 2.0 / (e + 1.0);
  return neg ? -r : r;
}

double sigmoid_d(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + exp_d(-x));
  }
  const double e = exp_d(x);
  return e / (1.0 + e);
}

double softplus_d(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return exp_d(x);
  return log1p_d(exp_d(x));
}

double normal_cdf_d(double x) { return 0.5 * erfc_d(-x * kSqrt1_2); }

double normal_pdf_d(double x) { return kInvSqrt2Pi * exp_d(-0.5 * x * x); }

} // namespace kmfv::detmath
