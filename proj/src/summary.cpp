#include "evsyn/summary.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

namespace evsyn {
namespace {

constexpr double kZ975 = 1.96;

double sorted_quantile(const std::vector<double>& sorted, double p)
{
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

double quantile(std::span<const double> draws, double p)
{
    if (draws.empty()) throw InsufficientDataError("quantile: no draws");
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile: probability outside [0, 1]");
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted_quantile(sorted, p);
}

DrawSummary summarize(std::span<const double> draws)
{
    if (draws.size() < 2) throw InsufficientDataError("summarize: need at least 2 draws, got " + std::to_string(draws.size()));
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());

    // Summation over the sorted copy keeps the result permutation invariant.
    const double n = static_cast<double>(sorted.size());
    const double m = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : sorted) ss += (x - m) * (x - m);

    DrawSummary s;
    s.mean = m;
    s.sd = std::sqrt(ss / (n - 1.0));
    s.lower = sorted_quantile(sorted, 0.025);
    s.upper = sorted_quantile(sorted, 0.975);
    s.n_draws = sorted.size();
    return s;
}

double se_from_ci(double lower_hr, double upper_hr)
{
    if (!(lower_hr > 0.0) || !(upper_hr > lower_hr))
        throw InputError("se_from_ci: need 0 < lower < upper");
    return (std::log(upper_hr) - std::log(lower_hr)) / (2.0 * 1.96);
}

HrEstimate HrEstimate::from_log(double log_hr, double se)
{
    return {log_hr, se, std::exp(log_hr), std::exp(log_hr - kZ975 * se), std::exp(log_hr + kZ975 * se)};
}

HrEstimate HrEstimate::from_log_draws(std::span<const double> log_draws)
{
    const DrawSummary s = summarize(log_draws);
    return {s.mean, s.sd, std::exp(s.mean), std::exp(s.lower), std::exp(s.upper)};
}

std::string format_hr(const HrEstimate& est, int decimals)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.*f (%.*f, %.*f)", decimals, est.hr, decimals, est.lower, decimals, est.upper);
    return buf;
}

} // namespace evsyn
