#pragma once

#include "evsyn/mcmc.hpp"
#include "evsyn/random.hpp"
#include "evsyn/summary.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evsyn::synthesis {

enum class Outcome { os, pfs };

std::string to_string(Outcome o);
Outcome parse_outcome(const std::string& s);

/// One study's effect on one outcome, log hazard ratio of treatment vs comparator.
struct StudyOutcome {
    std::string study;
    std::string treatment;
    std::string comparator;
    Outcome outcome = Outcome::os;
    std::optional<double> log_hr;  // missing: prediction target
    std::optional<double> se;      // may be missing only when log_hr is
    std::optional<double> n;       // patients contributing to the contrast

    bool complete() const { return log_hr.has_value() && se.has_value(); }
    /// From a reported HR and 95% interval.
    static StudyOutcome from_hr(std::string study, std::string treatment, std::string comparator, Outcome outcome,
                                double hr, double lower, double upper);
};

/// Throws InputError if a row breaks the missing-value rules.
void validate(const StudyOutcome& row);

/// Inverse-variance pooling in closed form.
HrEstimate fixed_effect_ma(std::span<const StudyOutcome> rows);

struct RePriors {
    Normal mean = Normal::from_variance(0.0, 1000.0);
    Distribution tau = HalfNormal::from_variance(1000.0);  // any prior on [0, inf)
};

struct ReResult {
    HrEstimate pooled;              // exp of the posterior mean of the pooled log-hr
    std::vector<double> log_hr_draws;
    DrawSummary tau;
    std::optional<mcmc::Diagnostics> diagnostics;
    std::vector<std::string> warnings;
};

/// Normal-normal random-effects model; a single study falls back to the fixed-effect result.
ReResult random_effects_ma(std::span<const StudyOutcome> rows, const RePriors& priors, const mcmc::ChainConfig& config);

/// How standard errors are exchanged across studies to fill in a missing one.
enum class VarianceModel {
    population,  // log(n * se^2) exchangeable: sampling variances scaled to one patient
    log_variance  // log(se^2) exchangeable
};

struct BrmaConfig {
    Normal eta_os_prior = Normal::from_variance(0.0, 1000.0);
    Normal lambda0_prior = Normal::from_variance(0.0, 1000.0);
    Distribution tau_prior = HalfNormal::from_variance(1000.0);
    Normal variance_mean_prior = Normal::from_variance(0.0, 1000.0);
    HalfNormal variance_sd_prior = HalfNormal::from_variance(10.0);
    bool within_correlation = true;   // false fixes every rho_w at 0
    bool between_correlation = true;  // false fixes rho_b at 0
    VarianceModel variance_model = VarianceModel::population;
    mcmc::ChainConfig chain;
};

struct PredictedEffect {
    std::string study;
    std::string treatment;
    std::string comparator;
    Outcome outcome = Outcome::pfs;
    HrEstimate effect;  // from the retained draws of the missing log-hr
    double se = 0.0;    // geometric mean of the drawn standard errors
    DrawSummary se_draws;
    std::vector<double> log_hr_draws;

    /// The predicted log-hr with its predicted standard error, for indirect comparison.
    StudyOutcome as_study_outcome() const;
};

struct BrmaPosterior {
    mcmc::ChainOutput output;
    std::map<std::string, DrawSummary> summaries;  // eta_os, lambda0, lambda1, psi2_os, psi2_pfs, tau_*, rho_*
    HrEstimate pooled_os;   // exp(eta_os)
    HrEstimate pooled_pfs;  // exp(lambda0)
    std::vector<PredictedEffect> predictions;
    std::optional<mcmc::Diagnostics> diagnostics;
    long constraint_rejections = 0;
    std::vector<std::string> warnings;

    const PredictedEffect& prediction(const std::string& study, Outcome outcome) const;
};

/**
 * Bivariate random-effects meta-analysis in product-normal form. Studies
 * with one outcome missing get that log-hr imputed from the joint normal
 * each iteration; its standard error is drawn from an exchangeable model
 * for the observed ones.
 */
BrmaPosterior brma_fit(std::span<const StudyOutcome> rows, const BrmaConfig& config);

/// A comparison of two treatments on the log-hr scale.
struct Contrast {
    std::string treatment;
    std::string comparator;
    double log_hr = 0.0;
    double se = 0.0;

    HrEstimate estimate() const { return HrEstimate::from_log(log_hr, se); }
    Contrast inverted() const { return {comparator, treatment, -log_hr, se}; }
    static Contrast from(const StudyOutcome& row);
    static Contrast from(const std::string& treatment, const std::string& comparator, const HrEstimate& est);
};

/// A vs B from A vs C and B vs C: log-hrs subtract, variances add.
Contrast bucher_indirect(const Contrast& ac, const Contrast& bc);
/// Same, reorienting either input so the shared treatment cancels.
Contrast indirect_via_common(const Contrast& first, const Contrast& second);
/// Draw-wise subtraction of equally long posterior samples.
std::vector<double> bucher_draws(std::span<const double> ac, std::span<const double> bc);

struct NmaConfig {
    Normal effect_prior = Normal::from_variance(0.0, 1000.0);
    Distribution tau_prior = HalfNormal::from_variance(1000.0);
    bool random_effects = true;
    std::optional<std::string> reference;  // defaults to the first treatment by name
    mcmc::ChainConfig chain;
};

struct NmaContrast {
    Contrast contrast;  // posterior mean log-hr and sd
    HrEstimate hr;      // exp of draw mean and percentiles
};

struct NmaResult {
    std::string reference;
    std::vector<std::string> treatments;
    std::vector<NmaContrast> contrasts;  // every ordered pair (treatment, comparator) with treatment after comparator
    std::optional<DrawSummary> tau;
    std::optional<mcmc::Diagnostics> diagnostics;
    std::vector<std::string> warnings;
    mcmc::ChainOutput output;

    const NmaContrast& get(const std::string& treatment, const std::string& comparator) const;
    /// Draws of treatment vs comparator.
    std::vector<double> draws(const std::string& treatment, const std::string& comparator) const;
};

/// Connected components of the treatment graph, each sorted by name.
std::vector<std::vector<std::string>> components(std::span<const StudyOutcome> rows);

/// Contrast-based network meta-analysis with consistency and one common tau.
NmaResult nma_fit(std::span<const StudyOutcome> rows, const NmaConfig& config);

} // namespace evsyn::synthesis
