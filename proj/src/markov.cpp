#include "evsyn/markov.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace evsyn::markov {

namespace {

constexpr std::uint64_t psa_stream = 0x505341;
constexpr int max_redraws = 1000;

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

} // namespace

double weibull_tp(double lambda, double gamma, double t, double u)
{
    if (!(lambda > 0.0) || !(gamma > 0.0)) throw InputError("weibull_tp: lambda and gamma must be positive");
    if (!(u > 0.0)) throw InputError("weibull_tp: cycle length must be positive");
    if (t < u) throw InputError("weibull_tp: t must be at least one cycle length");
    return -std::expm1(lambda * std::pow(t - u, gamma) - lambda * std::pow(t, gamma));
}

double scaled_tp(double base, double log_hr)
{
    if (!(base >= 0.0 && base <= 1.0)) throw InputError("scaled_tp: base probability outside [0, 1]");
    if (base == 1.0) return 1.0;
    return -std::expm1(std::exp(log_hr) * std::log1p(-base));
}

double exp_tp_from_mean(double mean_time, double u)
{
    if (!(mean_time > 0.0)) throw InputError("exp_tp_from_mean: mean time must be positive");
    return -std::expm1(-u / mean_time);
}

double pd_death_mean(double total_mean, double std_to_pd_mean)
{
    const double d = total_mean - std_to_pd_mean;
    if (!(d > 0.0)) {
        std::ostringstream os;
        os << "pd_death_mean: mean survival " << total_mean << " does not exceed mean time to progression "
           << std_to_pd_mean;
        throw NumericalError(os.str());
    }
    return d;
}

double discount_factor(int cycle, double annual_rate, int discount_start, double cycle_length)
{
    if (cycle < 1) throw InputError("discount_factor: cycles are numbered from 1");
    if (cycle < discount_start) return 1.0;
    const double months = (cycle - discount_start) * cycle_length;
    const int years = 1 + static_cast<int>(std::floor(months / 12.0 + 1e-9));
    return std::pow(1.0 + annual_rate, -years);
}

double usd_utility(double tp_stay, double tp_prog, double tp_death, double u_surviving, double u_pd, double u_other)
{
    if (std::abs(tp_stay + tp_prog + tp_death - 1.0) > 1e-9)
        throw InputError("usd_utility: transition probabilities must sum to 1");
    return tp_stay * u_surviving + tp_prog * u_pd + tp_death * u_other;
}

WeibullDraw draw_weibull_params(const WeibullAft& fit, RandomStream& stream)
{
    WeibullDraw out;
    if (fit.cov.is_zero()) {
        if (!(fit.alpha > 0.0)) throw InputError("draw_weibull_params: scale coefficient must be positive");
        out.lambda = std::exp(-fit.beta / fit.alpha);
        out.gamma = 1.0 / fit.alpha;
        return out;
    }
    const Chol2d d = cholesky2(fit.cov);
    std::normal_distribution<double> z;
    for (int attempt = 0; attempt < max_redraws; ++attempt) {
        const double z0 = z(stream);
        const double z1 = z(stream);
        const double beta = fit.beta + d.u * z0;
        const double alpha = fit.alpha + d.v * z0 + d.w * z1;
        if (alpha > 0.0) {
            out.lambda = std::exp(-beta / alpha);
            out.gamma = 1.0 / alpha;
            return out;
        }
        ++out.rejected;
    }
    throw NumericalError("draw_weibull_params: no positive scale in " + std::to_string(max_redraws) + " draws");
}

std::string to_string(Variant v) { return v == Variant::two_state ? "two-state" : "three-state"; }

Variant parse_variant(const std::string& s)
{
    if (s == "2" || s == "two-state" || s == "two_state" || s == "2state") return Variant::two_state;
    if (s == "3" || s == "three-state" || s == "three_state" || s == "3state") return Variant::three_state;
    throw InputError("unknown model variant '" + s + "' (expected two-state or three-state)");
}

const std::optional<TransitionGen>& InterventionSpec::edge(Edge e) const
{
    switch (e) {
    case Edge::std_death: return std_death;
    case Edge::std_pd: return std_pd;
    default: return pd_death;
    }
}

std::size_t ModelSpec::index_of(const std::string& label) const
{
    for (std::size_t i = 0; i < interventions.size(); ++i)
        if (interventions[i].label == label) return i;
    throw InputError("model: unknown intervention '" + label + "'");
}

namespace {

std::vector<Edge> edges_of(Variant v)
{
    if (v == Variant::two_state) return {Edge::std_death};
    return {Edge::std_pd, Edge::std_death, Edge::pd_death};
}

const char* edge_name(Edge e)
{
    switch (e) {
    case Edge::std_death: return "StD->Death";
    case Edge::std_pd: return "StD->PD";
    default: return "PD->Death";
    }
}

void check_uncertain(const Uncertain& u, const std::string& what)
{
    if (const auto* d = std::get_if<Distribution>(&u)) {
        evsyn::validate(*d);
    } else if (!std::isfinite(std::get<double>(u))) {
        throw InputError(what + " is not finite");
    }
}

} // namespace

void ModelSpec::validate() const
{
    if (cycles < 1) throw InputError("model: at least one cycle is required");
    if (!(cycle_length > 0.0)) throw InputError("model: cycle length must be positive");
    if (!(cohort_size > 0.0)) throw InputError("model: cohort size must be positive");
    if (!(annual_discount >= 0.0)) throw InputError("model: discount rate must be non-negative");
    if (interventions.empty()) throw InputError("model: no interventions");
    for (std::size_t i = 0; i < interventions.size(); ++i) {
        const auto& iv = interventions[i];
        if (iv.label.empty()) throw InputError("model: intervention without a label");
        for (std::size_t j = 0; j < i; ++j)
            if (interventions[j].label == iv.label) throw InputError("model: duplicate intervention '" + iv.label + "'");
        if (!(iv.drug_cost_per_cycle >= 0.0)) throw InputError(iv.label + ": drug cost must be non-negative");
        if (!(iv.division_factor >= 0.0 && iv.division_factor <= 1.0))
            throw InputError(iv.label + ": division factor must lie in [0, 1]");
        if (iv.cycles_on_drug) check_uncertain(*iv.cycles_on_drug, iv.label + " cycles on drug");
        check_uncertain(iv.follow_up_cost, iv.label + " follow-up cost");
        check_uncertain(iv.terminal_care_cost, iv.label + " terminal care cost");
        if (iv.cost_ratio) {
            const auto ref = index_of(iv.cost_ratio->reference);
            if (ref == i || interventions[ref].cost_ratio)
                throw InputError(iv.label + ": cost ratio must refer to an intervention with its own costs");
            evsyn::validate(iv.cost_ratio->numerator);
            evsyn::validate(iv.cost_ratio->denominator);
        }
        for (Edge e : edges_of(variant)) {
            const auto& gen = iv.edge(e);
            if (!gen) throw InputError(iv.label + ": no generator for " + edge_name(e));
            if (const auto* f = std::get_if<FixedProb>(&*gen); f && !is_probability(f->p))
                throw InputError(iv.label + ": fixed probability outside [0, 1]");
            if (const auto* w = std::get_if<WeibullAft>(&*gen); w && !(w->alpha > 0.0))
                throw InputError(iv.label + ": Weibull scale coefficient must be positive");
            if (const auto* h = std::get_if<HazardScaled>(&*gen)) check_uncertain(h->log_hr, iv.label + " log hazard ratio");
            if (const auto* x = std::get_if<ExponentialFromMean>(&*gen)) {
                check_uncertain(x->mean, iv.label + " mean time");
                check_uncertain(x->minus, iv.label + " preceding mean time");
            }
            // follow scaled references to a concrete generator
            std::size_t at = i;
            for (std::size_t hops = 0;; ++hops) {
                const auto* s = std::get_if<HazardScaled>(&*interventions[at].edge(e));
                if (!s) break;
                if (hops >= interventions.size())
                    throw InputError(iv.label + ": circular hazard-ratio references on " + edge_name(e));
                at = index_of(s->base);
                if (!interventions[at].edge(e))
                    throw InputError(iv.label + ": base '" + s->base + "' has no generator for " + edge_name(e));
            }
        }
    }
}

namespace {

double draw_exponential_p(const ExponentialFromMean& x, double u, RandomStream& rs, int& redraws)
{
    for (int attempt = 0; attempt < max_redraws; ++attempt) {
        const double total = draw(rs, x.mean);
        const double minus = draw(rs, x.minus);
        if (total - minus > 0.0) return exp_tp_from_mean(total - minus, u);
        ++redraws;
    }
    throw NumericalError("exponential sojourn: mean time minus preceding time is non-positive in every redraw");
}

template <class Draw>
ParameterDraw make_parameters(const ModelSpec& spec, Draw&& sampler)
{
    spec.validate();
    ParameterDraw pd;
    pd.interventions.resize(spec.interventions.size());
    for (std::size_t i = 0; i < spec.interventions.size(); ++i) {
        const auto& iv = spec.interventions[i];
        auto& out = pd.interventions[i];
        for (Edge e : edges_of(spec.variant)) {
            auto& ed = out.edges[static_cast<int>(e)];
            std::visit(
                [&](const auto& g) {
                    using T = std::decay_t<decltype(g)>;
                    if constexpr (std::is_same_v<T, WeibullAft>) {
                        const auto w = sampler.weibull(g, pd);
                        ed.kind = EdgeDraw::weibull;
                        ed.lambda = w.lambda;
                        ed.gamma = w.gamma;
                    } else if constexpr (std::is_same_v<T, HazardScaled>) {
                        ed.kind = EdgeDraw::scaled;
                        ed.base = static_cast<int>(spec.index_of(g.base));
                        ed.hr = std::exp(sampler.value(g.log_hr));
                    } else if constexpr (std::is_same_v<T, ExponentialFromMean>) {
                        ed.kind = EdgeDraw::constant;
                        ed.p = sampler.exponential(g, spec.cycle_length, pd);
                    } else {
                        ed.kind = EdgeDraw::constant;
                        ed.p = g.p;
                    }
                },
                *iv.edge(e));
        }
        if (iv.cycles_on_drug) out.cycles_on_drug = std::max(0.0, sampler.value(*iv.cycles_on_drug));
        if (!iv.cost_ratio) {
            out.follow_up_cost = std::max(0.0, sampler.value(iv.follow_up_cost));
            out.terminal_care_cost = std::max(0.0, sampler.value(iv.terminal_care_cost));
        } else {
            out.cost_ratio = sampler.ratio(*iv.cost_ratio);
        }
    }
    for (std::size_t i = 0; i < spec.interventions.size(); ++i) {
        const auto& iv = spec.interventions[i];
        if (!iv.cost_ratio) continue;
        const auto& ref = pd.interventions[spec.index_of(iv.cost_ratio->reference)];
        pd.interventions[i].follow_up_cost = ref.follow_up_cost * pd.interventions[i].cost_ratio;
        pd.interventions[i].terminal_care_cost = ref.terminal_care_cost * pd.interventions[i].cost_ratio;
    }
    pd.u_pd = sampler.value(spec.utilities.pd);
    pd.u_surviving = sampler.value(spec.utilities.surviving);
    pd.u_other = sampler.value(spec.utilities.other_causes);
    for (double u : {pd.u_pd, pd.u_surviving, pd.u_other})
        if (!is_probability(u)) throw InputError("model: utility outside [0, 1]");
    return pd;
}

struct RandomSampler {
    RandomStream& rs;

    double value(const Uncertain& u) { return draw(rs, u); }
    WeibullDraw weibull(const WeibullAft& w, ParameterDraw& pd)
    {
        const auto d = draw_weibull_params(w, rs);
        pd.weibull_rejections += d.rejected;
        pd.weibull_draws += 1 + d.rejected;
        return d;
    }
    double exponential(const ExponentialFromMean& x, double u, ParameterDraw& pd)
    {
        return draw_exponential_p(x, u, rs, pd.infeasible_redraws);
    }
    double ratio(const CostRatio& c) { return sample(rs, c.numerator) / sample(rs, c.denominator); }
};

struct MeanSampler {
    double value(const Uncertain& u) { return expected(u); }
    WeibullDraw weibull(const WeibullAft& w, ParameterDraw&)
    {
        return {std::exp(-w.beta / w.alpha), 1.0 / w.alpha, 0};
    }
    double exponential(const ExponentialFromMean& x, double u, ParameterDraw&)
    {
        return exp_tp_from_mean(pd_death_mean(expected(x.mean), expected(x.minus)), u);
    }
    double ratio(const CostRatio& c) { return mean(c.numerator) / mean(c.denominator); }
};

} // namespace

ParameterDraw draw_parameters(const ModelSpec& spec, RandomStream& stream)
{
    return make_parameters(spec, RandomSampler{stream});
}

ParameterDraw expected_parameters(const ModelSpec& spec) { return make_parameters(spec, MeanSampler{}); }

double transition_probability(const ModelSpec& spec, const ParameterDraw& draw, std::size_t intervention, Edge e,
                              int cycle)
{
    const auto& ed = draw.interventions.at(intervention).edges[static_cast<int>(e)];
    switch (ed.kind) {
    case EdgeDraw::weibull: return weibull_tp(ed.lambda, ed.gamma, cycle * spec.cycle_length, spec.cycle_length);
    case EdgeDraw::scaled:
        return scaled_tp(transition_probability(spec, draw, static_cast<std::size_t>(ed.base), e, cycle), std::log(ed.hr));
    default: return ed.p;
    }
}

double CohortTrace::time_in(State s, double cycle_length) const
{
    const double n = counts.row(0).sum();
    return counts.col(s).head(counts.rows() - 1).sum() * cycle_length / n;
}

CohortTrace run_cohort(const ModelSpec& spec, std::size_t intervention, const ParameterDraw& draw)
{
    const int n = spec.cycles;
    CohortTrace tr;
    tr.counts = Eigen::MatrixXd::Zero(n + 1, 3);
    tr.progressed = Eigen::VectorXd::Zero(n);
    tr.died = Eigen::VectorXd::Zero(n);
    tr.qaly = Eigen::VectorXd::Zero(n);
    tr.discount.resize(n);
    tr.counts(0, StD) = spec.cohort_size;
    const double years_per_cycle = spec.cycle_length / 12.0;
    const bool three = spec.variant == Variant::three_state;

    auto tp = [&](Edge e, int c) {
        const double p = transition_probability(spec, draw, intervention, e, c);
        if (!is_probability(p)) {
            std::ostringstream os;
            os << spec.interventions[intervention].label << ": " << edge_name(e) << " probability " << p
               << " outside [0, 1] in cycle " << c;
            throw NumericalError(os.str());
        }
        return p;
    };

    for (int c = 1; c <= n; ++c) {
        const double s = tr.counts(c - 1, StD);
        const double p = tr.counts(c - 1, PD);
        const double df = discount_factor(c, spec.annual_discount, spec.discount_start, spec.cycle_length);
        tr.discount(c - 1) = df;
        double to_pd = 0.0, s_death = 0.0, p_death = 0.0, u_std = draw.u_pd;
        if (three) {
            const double a = tp(Edge::std_pd, c);
            const double b = tp(Edge::std_death, c);
            if (a + b > 1.0 + 1e-12) {
                std::ostringstream os;
                os << spec.interventions[intervention].label << ": StD exit probabilities sum to " << a + b
                   << " in cycle " << c;
                throw NumericalError(os.str());
            }
            const double stay = std::max(0.0, 1.0 - a - b);
            u_std = usd_utility(stay, a, b, draw.u_surviving, draw.u_pd, draw.u_other);
            to_pd = s * a;
            s_death = s * b;
            p_death = p * tp(Edge::pd_death, c);
        } else {
            s_death = s * tp(Edge::std_death, c);
        }
        tr.qaly(c - 1) = (s * u_std + p * draw.u_pd) * years_per_cycle * df;
        tr.counts(c, StD) = s - to_pd - s_death;
        tr.counts(c, PD) = p + to_pd - p_death;
        tr.counts(c, Death) = tr.counts(c - 1, Death) + s_death + p_death;
        tr.progressed(c - 1) = to_pd;
        tr.died(c - 1) = s_death + p_death;
    }
    return tr;
}

CostBreakdown accrue_costs(const ModelSpec& spec, const CohortTrace& trace, std::size_t intervention,
                           const ParameterDraw& draw)
{
    const auto& iv = spec.interventions.at(intervention);
    const auto& d = draw.interventions.at(intervention);
    const double n = spec.cohort_size;
    const bool three = spec.variant == Variant::three_state;
    const double psi = three ? iv.division_factor : 1.0;
    CostBreakdown out;
    std::optional<double> remaining = d.cycles_on_drug;
    for (int c = 1; c <= spec.cycles; ++c) {
        const double df = trace.discount(c - 1);
        double on_drug = trace.counts(c - 1, StD) / n;
        if (remaining) {
            on_drug = std::min(on_drug, *remaining);
            *remaining -= on_drug;
        }
        out.drug += iv.drug_cost_per_cycle * on_drug * df;
        out.follow_up_std += (1.0 - psi) * d.follow_up_cost * trace.progressed(c - 1) / n * df;
        out.follow_up_pd += psi * d.follow_up_cost * trace.died(c - 1) / n * df;
        out.terminal += d.terminal_care_cost * trace.died(c - 1) / n * df;
    }
    return out;
}

std::vector<PsaSample> evaluate(const ModelSpec& spec, const ParameterDraw& draw, long draw_id)
{
    std::vector<PsaSample> out;
    for (std::size_t i = 0; i < spec.interventions.size(); ++i) {
        const auto tr = run_cohort(spec, i, draw);
        PsaSample s;
        s.draw = draw_id;
        s.intervention = spec.interventions[i].label;
        s.costs = accrue_costs(spec, tr, i, draw);
        s.cost = s.costs.total();
        s.qaly = tr.total_qaly() / spec.cohort_size;
        s.time_std = tr.time_in(StD, spec.cycle_length);
        s.time_pd = tr.time_in(PD, spec.cycle_length);
        out.push_back(std::move(s));
    }
    return out;
}

PsaResult run_psa(const ModelSpec& spec, long draws, std::uint64_t seed, int workers)
{
    if (draws < 1) throw InputError("run_psa: at least one draw is required");
    if (workers < 1) throw InputError("run_psa: at least one worker is required");
    spec.validate();
    const std::size_t k = spec.interventions.size();
    const RandomStream root(seed, psa_stream);

    PsaResult res;
    res.samples.resize(static_cast<std::size_t>(draws) * k);
    std::vector<int> rejected(draws, 0), attempts(draws, 0), infeasible(draws, 0);
    std::vector<std::pair<long, std::string>> failures;
    std::mutex failure_mutex;
    std::atomic<long> next{0};

    auto work = [&] {
        for (long d = next++; d < draws; d = next++) {
            try {
                RandomStream rs = root.substream(static_cast<std::uint64_t>(d));
                const auto pd = draw_parameters(spec, rs);
                rejected[d] = pd.weibull_rejections;
                attempts[d] = pd.weibull_draws;
                infeasible[d] = pd.infeasible_redraws;
                auto out = evaluate(spec, pd, d);
                std::move(out.begin(), out.end(), res.samples.begin() + d * static_cast<long>(k));
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                failures.emplace_back(d, e.what());
            }
        }
    };
    const int n_threads = static_cast<int>(std::min<long>(workers, draws));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        std::ostringstream os;
        os << "run_psa: " << failures.size() << " of " << draws << " draws failed";
        for (std::size_t i = 0; i < std::min<std::size_t>(failures.size(), 5); ++i)
            os << "; draw " << failures[i].first << ": " << failures[i].second;
        throw NumericalError(os.str());
    }
    const long total_rejected = std::accumulate(rejected.begin(), rejected.end(), 0L);
    const long total_attempts = std::accumulate(attempts.begin(), attempts.end(), 0L);
    if (total_attempts > 0 && total_rejected > 0.01 * total_attempts) {
        std::ostringstream os;
        os << "Weibull coefficient draws: " << total_rejected << " of " << total_attempts
           << " had a non-positive scale and were redrawn";
        res.warnings.push_back(os.str());
    }
    if (const long inf = std::accumulate(infeasible.begin(), infeasible.end(), 0L); inf > 0)
        res.warnings.push_back("exponential sojourn: " + std::to_string(inf)
                               + " draws with mean survival below mean time to progression were redrawn");
    return res;
}

} // namespace evsyn::markov
