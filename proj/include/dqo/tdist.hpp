#ifndef DQO_TDIST_HPP
#define DQO_TDIST_HPP

// Student's t distribution: CDF through the regularized incomplete beta
// function and quantile by safeguarded Newton inversion of that CDF.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace dqo::stats {

namespace detail {

/// log Gamma(a + b) - log Gamma(a), accurate when a is large and b moderate.
inline double log_gamma_ratio(double a, double b)
{
    if (a < 10.0)
        return std::lgamma(a + b) - std::lgamma(a);
    // Stirling series difference; avoids cancelling two huge lgamma values.
    auto tail = [](double z) {
        const double z2 = z * z;
        return 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2);
    };
    const double s = a + b;
    return (a - 0.5) * std::log1p(b / a) + b * std::log(s) - b + tail(s) - tail(a);
}

inline double log_beta(double a, double b)
{
    if (a < b)
        std::swap(a, b);
    // a >= b
    return std::lgamma(b) - log_gamma_ratio(a, b);
}

/// Continued fraction for I_x(a, b) (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x)
{
    constexpr int max_iter = 200000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps)
            return h;
    }
    throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

} // namespace detail

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
inline double incomplete_beta(double a, double b, double x, double y)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("incomplete_beta: a and b must be positive");
    if (x < 0.0 || x > 1.0)
        throw std::invalid_argument("incomplete_beta: x outside [0, 1]");
    if (x == 0.0)
        return 0.0;
    if (y == 0.0)
        return 1.0;
    const double log_front = a * std::log(x) + b * std::log(y) - detail::log_beta(a, b);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, y) / b;
}

inline double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

/// P(T <= t) for Student's t with `dof` degrees of freedom (dof > 0, real).
inline double t_cdf(double t, double dof)
{
    if (!(dof > 0.0))
        throw std::invalid_argument("t_cdf: dof must be positive");
    if (std::isnan(t))
        return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t))
        return t > 0 ? 1.0 : 0.0;
    const double t2 = t * t;
    const double x = dof / (dof + t2);
    const double y = t2 / (dof + t2);
    const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x, y);
    return t > 0 ? 1.0 - tail : tail;
}

inline double t_pdf(double t, double dof)
{
    const double log_norm = -0.5 * std::log(dof) - detail::log_beta(0.5 * dof, 0.5);
    return std::exp(log_norm - 0.5 * (dof + 1.0) * std::log1p(t * t / dof));
}

namespace detail {

/// Acklam-style rational approximation of the standard normal quantile;
/// only used as a starting point for Newton iterations.
inline double normal_quantile_guess(double p)
{
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - plow)
        return -normal_quantile_guess(1 - p);
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

} // namespace detail

/// Value q with P(T <= q) = prob for Student's t with `dof` degrees of freedom.
inline double t_quantile(double dof, double prob)
{
    if (!(dof > 0.0))
        throw std::invalid_argument("t_quantile: dof must be positive");
    if (!(prob > 0.0 && prob < 1.0))
        throw std::invalid_argument("t_quantile: prob must lie in (0, 1)");
    if (prob == 0.5)
        return 0.0;
    // Solve in the lower tail, where the target probability is representable
    // without cancellation, then reflect.
    if (prob > 0.5)
        return -t_quantile(dof, 1.0 - prob);

    // dof = 1 and dof = 2 have closed forms.
    if (dof == 1.0)
        return std::tan(std::numbers::pi * (prob - 0.5));
    if (dof == 2.0) {
        const double a = 4.0 * prob * (1.0 - prob);
        return (2.0 * prob - 1.0) * std::sqrt(2.0 / a);
    }

    // Bracket [lo, hi] with cdf(lo) <= prob <= cdf(hi), hi <= 0.
    double hi = 0.0;
    double lo = std::min(detail::normal_quantile_guess(prob), -1.0);
    while (t_cdf(lo, dof) > prob) {
        hi = lo;
        lo *= 2.0;
        if (lo < -1e300)
            return -std::numeric_limits<double>::infinity();
    }
    double q = std::clamp(detail::normal_quantile_guess(prob), lo, hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double f = t_cdf(q, dof) - prob;
        if (f == 0.0)
            return q;
        if (f > 0)
            hi = q;
        else
            lo = q;
        const double step = f / t_pdf(q, dof);
        double next = q - step;
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (std::fabs(next - q) <= 1e-15 * std::max(1.0, std::fabs(q)))
            return next;
        q = next;
    }
    return q;
}

} // namespace dqo::stats

#endif // DQO_TDIST_HPP
