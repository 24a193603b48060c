#include <doctest.h>

#include "evsyn/error.hpp"
#include "evsyn/markov.hpp"

#include <cmath>

using namespace evsyn;
using namespace evsyn::markov;

TEST_CASE("weibull transition probability")
{
    for (double t : {1.0, 2.0, 7.0, 100.0}) CHECK(weibull_tp(0.1, 1.0, t) == doctest::Approx(1 - std::exp(-0.1)));
    CHECK(weibull_tp(0.1, 1.0, 1.0) == doctest::Approx(0.09516).epsilon(1e-4));
    CHECK(weibull_tp(0.05, 1.3, 1.0) == doctest::Approx(1 - std::exp(-0.05)));
    CHECK(weibull_tp(0.05, 1.2, 3.0) == doctest::Approx(0.0695).epsilon(1e-3));
    CHECK_THROWS_AS(weibull_tp(0.1, 1.0, 0.5), InputError);
    CHECK_THROWS_AS(weibull_tp(-0.1, 1.0, 2.0), InputError);
    double prev = 0.0;
    for (double lambda = 0.01; lambda < 1.0; lambda += 0.05) {
        const double p = weibull_tp(lambda, 1.4, 5.0);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("hazard-ratio scaling of a probability")
{
    CHECK(scaled_tp(0.3, 0.0) == doctest::Approx(0.3));
    CHECK(scaled_tp(0.1, std::log(2.0)) == doctest::Approx(0.19));
    CHECK(scaled_tp(0.4, -40.0) < 1e-15);
    CHECK(scaled_tp(1.0, -1.0) == 1.0);
    double prev = 0.0;
    for (double lhr = -3.0; lhr < 3.0; lhr += 0.25) {
        const double p = scaled_tp(0.2, lhr);
        CHECK(p > prev);
        prev = p;
    }
    CHECK_THROWS_AS(scaled_tp(1.2, 0.0), InputError);
}

TEST_CASE("exponential sojourn probabilities")
{
    CHECK(exp_tp_from_mean(20.0) == doctest::Approx(0.04877).epsilon(1e-4));
    CHECK(exp_tp_from_mean(3.0, 3.0) == doctest::Approx(0.63212).epsilon(1e-5));
    CHECK(exp_tp_from_mean(1e12) < 1e-11);
    CHECK_THROWS_AS(exp_tp_from_mean(0.0), InputError);

    CHECK(pd_death_mean(17.6, 5.9) == doctest::Approx(11.7));
    CHECK_THROWS_AS(pd_death_mean(5.9, 5.9), NumericalError);
    CHECK_THROWS_AS(pd_death_mean(4.0, 5.9), NumericalError);
}

TEST_CASE("annual discounting from the second year")
{
    for (int c = 1; c <= 12; ++c) CHECK(discount_factor(c) == 1.0);
    CHECK(discount_factor(13) == doctest::Approx(0.96618).epsilon(1e-5));
    CHECK(discount_factor(24) == discount_factor(13));
    CHECK(discount_factor(25) == doctest::Approx(0.93351).epsilon(1e-5));
    CHECK(discount_factor(180) == doctest::Approx(std::pow(1.035, -14)));
    CHECK_THROWS_AS(discount_factor(0), InputError);
}

TEST_CASE("stable-disease utility")
{
    CHECK(usd_utility(0.2, 0.5, 0.3, 0.6, 0.6, 0.6) == doctest::Approx(0.6));
    CHECK(usd_utility(0.9, 0.095, 0.005, 0.770, 0.538, 0.564) == doctest::Approx(0.74693).epsilon(1e-5));
    CHECK(usd_utility(1.0, 0.0, 0.0, 0.770, 0.538, 0.564) == 0.770);
    CHECK_THROWS_AS(usd_utility(0.9, 0.2, 0.0, 0.7, 0.5, 0.5), InputError);
}

TEST_CASE("weibull coefficient draws")
{
    RandomStream rs(4);
    const auto fixed = draw_weibull_params({2.0, 1.0, {0.0, 0.0, 0.0}}, rs);
    CHECK(fixed.lambda == doctest::Approx(std::exp(-2.0)));
    CHECK(fixed.gamma == 1.0);
    const auto mapped = draw_weibull_params({1.5, 0.8, {0.0, 0.0, 0.0}}, rs);
    CHECK(mapped.lambda == doctest::Approx(std::exp(-1.5 / 0.8)));
    CHECK(mapped.gamma == doctest::Approx(1.25));

    const WeibullAft fit{2.5, 0.7, {0.04, -0.006, 0.0025}};
    const int n = 100000;
    double sb = 0, sa = 0, sbb = 0, saa = 0, sab = 0;
    for (int i = 0; i < n; ++i) {
        const auto d = draw_weibull_params(fit, rs);
        const double alpha = 1.0 / d.gamma;
        const double beta = -alpha * std::log(d.lambda);
        sb += beta;
        sa += alpha;
        sbb += beta * beta;
        saa += alpha * alpha;
        sab += alpha * beta;
    }
    const double mb = sb / n, ma = sa / n;
    CHECK(sbb / n - mb * mb == doctest::Approx(0.04).epsilon(0.03));
    CHECK(saa / n - ma * ma == doctest::Approx(0.0025).epsilon(0.03));
    CHECK(sab / n - mb * ma == doctest::Approx(-0.006).epsilon(0.03));

    // a scale near zero forces redraws
    const auto d = draw_weibull_params({1.0, 0.05, {0.01, 0.0, 0.01}}, rs);
    CHECK(d.gamma > 0.0);
    CHECK_THROWS_AS(draw_weibull_params({1.0, 1.0, {-1.0, 0.0, 1.0}}, rs), DefinitenessError);
}

namespace {

InterventionSpec constant_arm(const std::string& label, double p_death, double p_prog = 0.0, double p_pd_death = 0.0)
{
    InterventionSpec iv;
    iv.label = label;
    iv.std_death = FixedProb{p_death};
    iv.std_pd = FixedProb{p_prog};
    iv.pd_death = FixedProb{p_pd_death};
    return iv;
}

ModelSpec fixed_utilities(ModelSpec spec)
{
    spec.utilities = {0.5, 0.8, 0.6};
    return spec;
}

} // namespace

TEST_CASE("two-state cohort with a constant hazard")
{
    ModelSpec spec;
    spec.variant = Variant::two_state;
    spec.interventions = {constant_arm("A", 0.1)};
    spec = fixed_utilities(spec);
    const auto pd = expected_parameters(spec);
    const auto tr = run_cohort(spec, 0, pd);
    CHECK(tr.time_in(StD) == doctest::Approx(1.0 / 0.1).epsilon(0.01));
    for (int c = 0; c <= spec.cycles; ++c) {
        REQUIRE(tr.counts.row(c).sum() == doctest::Approx(spec.cohort_size).epsilon(1e-12));
        if (c > 0) REQUIRE(tr.counts(c, Death) >= tr.counts(c - 1, Death));
    }
    CHECK(tr.counts.col(PD).isZero());
}

TEST_CASE("nobody leaves stable disease")
{
    for (auto variant : {Variant::two_state, Variant::three_state}) {
        ModelSpec spec;
        spec.variant = variant;
        spec.interventions = {constant_arm("A", 0.0)};
        spec = fixed_utilities(spec);
        const auto tr = run_cohort(spec, 0, expected_parameters(spec));
        const double u = variant == Variant::two_state ? 0.5 : 0.8;
        double expect = 0.0;
        for (int c = 1; c <= 180; ++c) expect += u / 12.0 * discount_factor(c);
        CHECK(tr.total_qaly() / spec.cohort_size == doctest::Approx(expect));
        CHECK(tr.time_in(StD) == doctest::Approx(180.0));
        CHECK(tr.died.sum() == 0.0);
    }
}

TEST_CASE("three-state accounting")
{
    ModelSpec spec;
    spec.interventions = {constant_arm("A", 0.005, 0.15, 0.08)};
    spec.interventions[0].std_pd = WeibullAft{1.8, 0.9, {0.0, 0.0, 0.0}};
    spec = fixed_utilities(spec);
    const auto pd = expected_parameters(spec);
    const auto tr = run_cohort(spec, 0, pd);
    double alive = 0.0;
    for (int c = 0; c < spec.cycles; ++c) alive += spec.cohort_size - tr.counts(c, Death);
    CHECK(tr.time_in(StD) + tr.time_in(PD) == doctest::Approx(alive / spec.cohort_size).epsilon(1e-12));
    double cum = 0.0;
    for (int c = 0; c < spec.cycles; ++c) {
        cum += tr.progressed(c);
        CHECK(tr.progressed(c) >= 0.0);
        CHECK(tr.counts(c + 1, Death) - tr.counts(c, Death) == doctest::Approx(tr.died(c)));
    }
    CHECK(cum <= spec.cohort_size);

    // discounting only removes value
    ModelSpec flat = spec;
    flat.annual_discount = 0.0;
    const auto undiscounted = run_cohort(flat, 0, expected_parameters(flat));
    CHECK(tr.total_qaly() < undiscounted.total_qaly());
}

TEST_CASE("probabilities out of range are rejected")
{
    ModelSpec spec;
    spec.interventions = {constant_arm("A", 0.6, 0.6, 0.1)};
    CHECK_THROWS_AS(run_cohort(spec, 0, expected_parameters(spec)), NumericalError);
    spec.interventions = {constant_arm("A", 1.5, 0.0, 0.1)};
    CHECK_THROWS_AS(expected_parameters(spec), InputError);
}

namespace {

// One cycle, cohort of one, no discounting: totals read straight off the trace.
CostBreakdown follow_up(double psi, double progressed, double died)
{
    ModelSpec spec;
    spec.cycles = 1;
    spec.cohort_size = 1.0;
    auto iv = constant_arm("A", 0.0);
    iv.follow_up_cost = 1000.0;
    iv.division_factor = psi;
    spec.interventions = {iv};
    CohortTrace tr;
    tr.counts = Eigen::MatrixXd::Zero(2, 3);
    tr.progressed = Eigen::VectorXd::Constant(1, progressed);
    tr.died = Eigen::VectorXd::Constant(1, died);
    tr.qaly = Eigen::VectorXd::Zero(1);
    tr.discount = Eigen::VectorXd::Ones(1);
    return accrue_costs(spec, tr, 0, expected_parameters(spec));
}

} // namespace

TEST_CASE("follow-up cost split")
{
    const auto base = follow_up(0.75, 100, 80);
    CHECK(base.follow_up_std == doctest::Approx(25000.0));
    CHECK(base.follow_up_pd == doctest::Approx(60000.0));
    const auto all_death = follow_up(1.0, 100, 80);
    CHECK(all_death.follow_up_std == 0.0);
    CHECK(all_death.follow_up_pd == doctest::Approx(80000.0));
    CHECK(follow_up(0.75, 0, 0).follow_up() == 0.0);
}

TEST_CASE("drug cost stops at the administered cycles")
{
    ModelSpec spec;
    spec.variant = Variant::two_state;
    auto iv = constant_arm("A", 0.0);
    iv.drug_cost_per_cycle = 100.0;
    iv.cycles_on_drug = 5.9;
    auto open = constant_arm("P", 0.0);
    open.drug_cost_per_cycle = 1.0;
    spec.interventions = {iv, open};
    const auto pd = expected_parameters(spec);
    CHECK(accrue_costs(spec, run_cohort(spec, 0, pd), 0, pd).drug == doctest::Approx(590.0));
    double expect = 0.0;
    for (int c = 1; c <= 180; ++c) expect += discount_factor(c);
    CHECK(accrue_costs(spec, run_cohort(spec, 1, pd), 1, pd).drug == doctest::Approx(expect));
}

namespace {

ModelSpec uncertain_spec()
{
    ModelSpec spec;
    InterventionSpec mp;
    mp.label = "M+P";
    mp.std_pd = WeibullAft{2.0, 0.9, {0.01, -0.002, 0.004}};
    mp.std_death = FixedProb{0.005};
    mp.pd_death = ExponentialFromMean{Normal{17.6, 0.7}, Normal{5.9, 0.17}};
    mp.drug_cost_per_cycle = 347.73;
    mp.cycles_on_drug = Normal{5.9, 0.17};
    mp.follow_up_cost = Gamma{4.0, 4.0 / 5000.0};
    mp.terminal_care_cost = Gamma{3.0, 3.0 / 4000.0};
    InterventionSpec dp = mp;
    dp.label = "D+P";
    dp.std_pd = HazardScaled{"M+P", Normal{std::log(0.62), 0.23}};
    dp.drug_cost_per_cycle = 1253.92;
    dp.cycles_on_drug = Normal{7.3, 0.18};
    InterventionSpec p = mp;
    p.label = "P";
    p.std_pd = HazardScaled{"M+P", Normal{0.45, 0.1}};
    p.drug_cost_per_cycle = 1.48;
    p.cycles_on_drug.reset();
    p.cost_ratio = CostRatio{"M+P", Gamma{105.0, 1.0 / 276.0}, Gamma{81.0, 1.0 / 285.0}};
    spec.interventions = {mp, dp, p};
    return spec;
}

} // namespace

TEST_CASE("PSA is deterministic and independent of the worker count")
{
    const auto spec = uncertain_spec();
    const auto one = run_psa(spec, 200, 17, 1);
    const auto four = run_psa(spec, 200, 17, 4);
    REQUIRE(one.samples.size() == 600);
    for (std::size_t i = 0; i < one.samples.size(); ++i) {
        REQUIRE(one.samples[i].cost == four.samples[i].cost);
        REQUIRE(one.samples[i].qaly == four.samples[i].qaly);
        REQUIRE(one.samples[i].intervention == four.samples[i].intervention);
    }
    CHECK(one.samples[0].draw == 0);
    CHECK(one.samples[3].draw == 1);
    const auto other = run_psa(spec, 200, 18, 2);
    CHECK(other.samples[0].cost != one.samples[0].cost);
}

TEST_CASE("degenerate PSA repeats one sample")
{
    ModelSpec spec;
    auto iv = constant_arm("A", 0.01, 0.1, 0.05);
    iv.follow_up_cost = 1000.0;
    iv.terminal_care_cost = 500.0;
    iv.cycles_on_drug = 4.0;
    iv.drug_cost_per_cycle = 10.0;
    spec.interventions = {iv};
    spec = fixed_utilities(spec);
    const auto res = run_psa(spec, 50, 3, 3);
    for (const auto& s : res.samples) {
        CHECK(s.cost == res.samples[0].cost);
        CHECK(s.qaly == res.samples[0].qaly);
    }
}

TEST_CASE("identical interventions give zero increments on every draw")
{
    auto spec = uncertain_spec();
    spec.interventions.resize(1);
    auto twin = spec.interventions[0];
    twin.label = "twin";
    twin.std_pd = HazardScaled{"M+P", 0.0};
    twin.pd_death = spec.interventions[0].pd_death;
    spec.interventions.push_back(twin);
    // the twin draws its own uncertain inputs, so share them by fixing every one
    for (auto& iv : spec.interventions) {
        iv.pd_death = FixedProb{0.08};
        iv.cycles_on_drug = 5.9;
        iv.follow_up_cost = 5000.0;
        iv.terminal_care_cost = 4000.0;
    }
    const auto res = run_psa(spec, 100, 9, 2);
    for (std::size_t d = 0; d < 100; ++d) {
        CHECK(res.samples[2 * d].cost == doctest::Approx(res.samples[2 * d + 1].cost).epsilon(1e-14));
        CHECK(res.samples[2 * d].qaly == doctest::Approx(res.samples[2 * d + 1].qaly).epsilon(1e-14));
    }
}

TEST_CASE("cost ratio uses the reference intervention's draw")
{
    const auto spec = uncertain_spec();
    RandomStream rs(8);
    double ratio = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const auto pd = draw_parameters(spec, rs);
        const auto& mp = pd.interventions[0];
        const auto& p = pd.interventions[2];
        REQUIRE(p.follow_up_cost == doctest::Approx(mp.follow_up_cost * p.cost_ratio));
        REQUIRE(p.terminal_care_cost == doctest::Approx(mp.terminal_care_cost * p.cost_ratio));
        ratio += p.cost_ratio;
    }
    // E[X / Y] = (105 * 276) / (80 * 285)
    CHECK(ratio / n == doctest::Approx(105.0 * 276.0 / (80.0 * 285.0)).epsilon(0.01));
}

TEST_CASE("model validation")
{
    auto spec = uncertain_spec();
    spec.interventions[1].std_pd = HazardScaled{"nobody", Normal{0.0, 0.1}};
    CHECK_THROWS_AS(spec.validate(), InputError);
    spec = uncertain_spec();
    spec.interventions[0].std_pd = HazardScaled{"D+P", Normal{0.0, 0.1}};
    CHECK_THROWS_AS(spec.validate(), InputError);
    spec = uncertain_spec();
    spec.interventions[0].pd_death.reset();
    CHECK_THROWS_AS(spec.validate(), InputError);
    spec.variant = Variant::two_state;
    CHECK_NOTHROW(spec.validate());
    CHECK_THROWS_AS(run_psa(spec, 0, 1), InputError);
    CHECK(parse_variant("2") == Variant::two_state);
    CHECK_THROWS_AS(parse_variant("four"), InputError);
}
