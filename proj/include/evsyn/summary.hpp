#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace evsyn {

/// Posterior/Monte-Carlo summary with a central 95% interval.
struct DrawSummary {
    double mean = 0.0;
    double sd = 0.0;     // sample standard deviation of the draws
    double lower = 0.0;  // 2.5th percentile
    double upper = 0.0;  // 97.5th percentile
    std::size_t n_draws = 0;
};

/// Type-7 quantile (linear interpolation between order statistics).
double quantile(std::span<const double> draws, double p);

DrawSummary summarize(std::span<const double> draws);

/// Standard error of a log hazard ratio recovered from its 95% interval.
double se_from_ci(double lower_hr, double upper_hr);

/// Hazard ratio reported on the natural scale with log-scale moments.
struct HrEstimate {
    double log_hr = 0.0;
    double se = 0.0;
    double hr = 1.0;
    double lower = 1.0;
    double upper = 1.0;

    /// Normal-theory interval exp(log_hr +/- 1.96 se).
    static HrEstimate from_log(double log_hr, double se);
    /// exp(mean) with exp of the draw percentiles.
    static HrEstimate from_log_draws(std::span<const double> log_draws);
};

/// "0.903 (0.751, 1.084)".
std::string format_hr(const HrEstimate& est, int decimals = 3);

} // namespace evsyn
