#pragma once

#include "evsyn/linalg.hpp"
#include "evsyn/random.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace evsyn::markov {

/// 1 - S(t)/S(t-u) for S(t) = exp(-lambda t^gamma).
double weibull_tp(double lambda, double gamma, double t, double u = 1.0);
/// 1 - (1 - base)^HR.
double scaled_tp(double base, double log_hr);
/// Constant per-cycle probability of an exponential sojourn with the given mean.
double exp_tp_from_mean(double mean_time, double u = 1.0);
/// Mean time from progression to death, total survival minus time to progression.
double pd_death_mean(double total_mean, double std_to_pd_mean);
/// Annual step discounting; cycles before discount_start are undiscounted.
double discount_factor(int cycle, double annual_rate = 0.035, int discount_start = 13, double cycle_length = 1.0);
/// Stable-disease utility weighted by this cycle's transition probabilities.
double usd_utility(double tp_stay, double tp_prog, double tp_death, double u_surviving, double u_pd, double u_other);

/// Weibull AFT coefficients (intercept beta, scale alpha) with their covariance.
struct WeibullAft {
    double beta = 0.0;
    double alpha = 1.0;
    Sym2d cov{0.0, 0.0, 0.0};
};

/// The same edge of another intervention with its hazard multiplied by HR = exp(log_hr).
struct HazardScaled {
    std::string base;
    Uncertain log_hr = 0.0;
};

/// Exponential sojourn with mean (mean - minus); minus covers time already spent in an earlier state.
struct ExponentialFromMean {
    Uncertain mean = 1.0;
    Uncertain minus = 0.0;
};

struct FixedProb {
    double p = 0.0;
};

using TransitionGen = std::variant<WeibullAft, HazardScaled, ExponentialFromMean, FixedProb>;

struct WeibullDraw {
    double lambda = 1.0;
    double gamma = 1.0;
    int rejected = 0;  // draws with a non-positive scale that were redrawn
};

/// (beta, alpha) + Chol(cov) z mapped to (lambda, gamma); alpha <= 0 is redrawn.
WeibullDraw draw_weibull_params(const WeibullAft& fit, RandomStream& stream);

enum class Variant { two_state, three_state };
enum class Edge { std_death, std_pd, pd_death };
enum State { StD = 0, PD = 1, Death = 2 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Follow-up and terminal costs taken from another intervention times numerator / denominator.
struct CostRatio {
    std::string reference;
    Distribution numerator = Gamma{1.0, 1.0};
    Distribution denominator = Gamma{1.0, 1.0};
};

struct InterventionSpec {
    std::string label;
    std::optional<TransitionGen> std_death;
    std::optional<TransitionGen> std_pd;
    std::optional<TransitionGen> pd_death;
    double drug_cost_per_cycle = 0.0;
    std::optional<Uncertain> cycles_on_drug;  // empty: on drug for every cycle in StD
    Uncertain follow_up_cost = 0.0;           // one-off per patient
    Uncertain terminal_care_cost = 0.0;       // one-off per death
    std::optional<CostRatio> cost_ratio;      // replaces the two costs above
    double division_factor = 0.75;            // share of follow-up cost charged at death

    const std::optional<TransitionGen>& edge(Edge e) const;
};

struct UtilitySpec {
    Uncertain pd = Beta{21.1, 18.1};
    Uncertain surviving = Beta{581.3, 173.6};
    Uncertain other_causes = Beta{29.1, 22.5};
};

struct ModelSpec {
    Variant variant = Variant::three_state;
    int cycles = 180;
    double cycle_length = 1.0;  // months
    double cohort_size = 10000.0;
    double annual_discount = 0.035;
    int discount_start = 13;
    std::vector<InterventionSpec> interventions;
    UtilitySpec utilities;

    /// Throws InputError on missing edges, unknown or circular references.
    void validate() const;
    std::size_t index_of(const std::string& label) const;
};

/// One realized transition generator.
struct EdgeDraw {
    enum Kind { weibull, scaled, constant } kind = constant;
    double lambda = 0.0, gamma = 1.0;  // weibull
    double p = 0.0;                    // constant
    int base = -1;                     // scaled: intervention index
    double hr = 1.0;
};

struct InterventionDraw {
    std::array<EdgeDraw, 3> edges;  // indexed by Edge
    std::optional<double> cycles_on_drug;
    double follow_up_cost = 0.0;
    double terminal_care_cost = 0.0;
    double cost_ratio = 1.0;
};

struct ParameterDraw {
    std::vector<InterventionDraw> interventions;
    double u_pd = 0.0, u_surviving = 0.0, u_other = 0.0;
    int weibull_rejections = 0;
    int weibull_draws = 0;
    int infeasible_redraws = 0;
};

/// One joint draw of every uncertain input; utilities are shared by all interventions.
ParameterDraw draw_parameters(const ModelSpec& spec, RandomStream& stream);
/// Every input at its mean (Weibull coefficients at their point estimates).
ParameterDraw expected_parameters(const ModelSpec& spec);

/// Transition probability of an edge in a 1-based cycle.
double transition_probability(const ModelSpec& spec, const ParameterDraw& draw, std::size_t intervention, Edge e,
                              int cycle);

struct CohortTrace {
    Eigen::MatrixXd counts;        // (cycles + 1) x 3, row c holds the cohort at the start of cycle c + 1
    Eigen::VectorXd progressed;    // per cycle
    Eigen::VectorXd died;          // per cycle
    Eigen::VectorXd qaly;          // per cycle, discounted, whole cohort
    Eigen::VectorXd discount;      // per cycle

    double time_in(State s, double cycle_length = 1.0) const;  // mean per patient
    double total_qaly() const { return qaly.sum(); }
};

CohortTrace run_cohort(const ModelSpec& spec, std::size_t intervention, const ParameterDraw& draw);

/// Discounted costs per patient.
struct CostBreakdown {
    double drug = 0.0;
    double follow_up_std = 0.0;  // three-state: share charged at progression
    double follow_up_pd = 0.0;   // charged at death
    double terminal = 0.0;

    double follow_up() const { return follow_up_std + follow_up_pd; }
    double total() const { return drug + follow_up_std + follow_up_pd + terminal; }
};

CostBreakdown accrue_costs(const ModelSpec& spec, const CohortTrace& trace, std::size_t intervention,
                           const ParameterDraw& draw);

struct PsaSample {
    long draw = 0;
    std::string intervention;
    double cost = 0.0;  // per patient, discounted
    double qaly = 0.0;  // per patient, discounted
    CostBreakdown costs;
    double time_std = 0.0;  // months per patient, undiscounted
    double time_pd = 0.0;
};

struct PsaResult {
    std::vector<PsaSample> samples;  // draw-major, interventions in spec order
    std::vector<std::string> warnings;
};

/// Evaluates the model at every draw; draw k uses its own stream so results do not depend on workers.
PsaResult run_psa(const ModelSpec& spec, long draws, std::uint64_t seed, int workers = 1);

/// Every intervention under one parameter draw.
std::vector<PsaSample> evaluate(const ModelSpec& spec, const ParameterDraw& draw, long draw_id = 0);

} // namespace evsyn::markov
