#pragma once

#include "evsyn/linalg.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evsyn::survival {

/// One reconstructed or observed patient; time in months.
struct IpdRecord {
    double time = 0.0;
    bool event = false;
    std::string arm;
};

struct KmStep {
    double time = 0.0;
    double survival = 1.0;  // value of S(t) from this time until the next step
};

struct RiskRow {
    double start = 0.0;
    int n_at_risk = 0;  // patients with follow-up time >= start
};

/**
 * Kaplan-Meier step function plus its numbers-at-risk table.
 *
 * steps starts at (0, 1); a trailing step with unchanged survival marks the
 * end of follow-up when the last observation is censored.
 */
struct KmCurve {
    std::vector<KmStep> steps;
    std::vector<RiskRow> risk_table;

    double at(double t) const;
    double end_time() const;
};

/// Throws InputError naming the violated invariant.
void validate(const KmCurve& curve);

/// Product-limit estimate; risk_table filled at the given grid (may be empty).
KmCurve km_estimate(std::span<const IpdRecord> data, std::span<const double> risk_grid = {});

/// Evenly spaced grid 0, step, 2*step, ... strictly below the last observed time.
std::vector<double> regular_grid(std::span<const IpdRecord> data, double step);

struct ReconstructOptions {
    std::optional<int> total_events;
    double tolerance = 0.005;  // max |S_reconstructed - S_input| at the input steps
    std::string arm = "arm";
};

/**
 * Invert a digitized Kaplan-Meier curve into patient-level records.
 *
 * Within each risk-table interval the number censored is chosen so the
 * numbers at risk at the next boundary match exactly; censoring times are
 * spaced uniformly inside the interval and events are placed at the step
 * times so the re-estimated curve tracks the input. The final interval uses
 * the censoring rate observed before it. Throws ReconstructionError naming
 * the interval when no integer allocation meets the tolerance.
 */
std::vector<IpdRecord> reconstruct_ipd(const KmCurve& curve, const ReconstructOptions& options = {});

struct CoxFit {
    double log_hr = 0.0;  // comparison arm vs reference arm
    double se = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string reference_arm;
    std::string comparison_arm;
};

/// Breslow partial log-likelihood of the two-arm model at a given log-hr.
double cox_partial_loglik(std::span<const IpdRecord> data, const std::string& reference_arm, double log_hr);

/// Newton-Raphson on the Breslow partial likelihood with a single arm indicator.
CoxFit cox_fit(std::span<const IpdRecord> data, const std::string& reference_arm);

/// Accelerated-failure-time Weibull fit: log T = intercept + scale * W.
struct WeibullFit {
    double intercept = 0.0;  // beta
    double scale = 1.0;      // alpha
    Sym2d covariance{0.0, 0.0, 0.0};  // of (intercept, scale)
    double log_likelihood = 0.0;
    int iterations = 0;

    double lambda() const;  // exp(-beta / alpha)
    double gamma() const;   // 1 / alpha
};

/// Censored Weibull log-likelihood in the AFT parameterization.
double weibull_loglik(std::span<const IpdRecord> data, double intercept, double scale);

WeibullFit weibull_fit(std::span<const IpdRecord> data);

struct MeanSurvival {
    double mean = 0.0;
    std::optional<double> se;  // Greenwood-based; needs patient-level data
    double horizon = 0.0;
    std::vector<std::string> warnings;
};

/// Area under the KM curve on [0, horizon].
MeanSurvival restricted_mean(std::span<const IpdRecord> data, double horizon);
MeanSurvival restricted_mean(const KmCurve& curve, double horizon);

/// Log of events / person-time with se 1/sqrt(events); used for exponential mean times.
struct LogRate {
    double log_rate = 0.0;
    double se = 0.0;
    int events = 0;
    double exposure = 0.0;
};
LogRate log_hazard_rate(std::span<const IpdRecord> data);

/// Records belonging to one arm.
std::vector<IpdRecord> select_arm(std::span<const IpdRecord> data, const std::string& arm);

} // namespace evsyn::survival
