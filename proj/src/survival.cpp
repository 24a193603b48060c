#include "evsyn/survival.hpp"

#include "evsyn/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace evsyn::survival {
namespace {

std::vector<IpdRecord> sorted_by_time(std::span<const IpdRecord> data)
{
    std::vector<IpdRecord> out(data.begin(), data.end());
    std::stable_sort(out.begin(), out.end(), [](const IpdRecord& l, const IpdRecord& r) { return l.time < r.time; });
    return out;
}

void check_records(std::span<const IpdRecord> data, const char* who)
{
    if (data.empty()) throw InsufficientDataError(std::string(who) + ": no records");
    for (const auto& r : data)
        if (!std::isfinite(r.time) || !(r.time > 0.0))
            throw InputError(std::string(who) + ": record times must be finite and positive");
}

// Distinct event times with deaths and numbers at risk.
struct EventRow {
    double time;
    int deaths;
    int at_risk;
};

std::vector<EventRow> event_table(const std::vector<IpdRecord>& sorted)
{
    std::vector<EventRow> rows;
    const int n = static_cast<int>(sorted.size());
    int i = 0;
    while (i < n) {
        const double t = sorted[i].time;
        int d = 0;
        int j = i;
        for (; j < n && sorted[j].time == t; ++j) d += sorted[j].event ? 1 : 0;
        if (d > 0) rows.push_back({t, d, n - i});
        i = j;
    }
    return rows;
}

std::string interval_name(double lo, double hi)
{
    std::ostringstream os;
    os << "[" << lo << ", " << hi << ")";
    return os.str();
}

struct IntervalRun {
    std::vector<int> events;  // per step in the interval
    int total_events = 0;
    double s_hat_end = 1.0;
    double max_dev = 0.0;
    bool feasible = true;
};

// Walks the steps of one interval with c censorings spread uniformly over
// (lo, lo + width). Events are chosen to track the input curve unless fixed.
IntervalRun run_interval(std::span<const KmStep> steps, double lo, double width, int n_start, double s_hat, int c,
                         const std::vector<int>* fixed_events)
{
    IntervalRun run;
    run.events.resize(steps.size(), 0);
    int removed = 0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const double t = steps[k].time;
        // censor m sits at lo + (m + 1) * width / (c + 1); count those strictly before t.
        int censored_before = 0;
        if (c > 0 && width > 0.0) {
            const double frac = (t - lo) / width * static_cast<double>(c + 1);
            censored_before = std::clamp(static_cast<int>(std::ceil(frac)) - 1, 0, c);
            // guard against rounding at exact ties
            while (censored_before > 0 && lo + censored_before * width / (c + 1) >= t) --censored_before;
            while (censored_before < c && lo + (censored_before + 1) * width / (c + 1) < t) ++censored_before;
        }
        const int n_risk = n_start - removed - censored_before;
        if (n_risk < 0) {
            run.feasible = false;
            break;
        }
        int d = 0;
        if (fixed_events) {
            d = (*fixed_events)[k];
        } else if (n_risk > 0 && s_hat > 0.0) {
            const double target = static_cast<double>(n_risk) * (1.0 - steps[k].survival / s_hat);
            d = std::clamp(static_cast<int>(std::lround(target)), 0, n_risk);
        }
        if (d > n_risk) {
            run.feasible = false;
            break;
        }
        if (n_risk > 0) s_hat *= 1.0 - static_cast<double>(d) / n_risk;
        run.events[k] = d;
        removed += d;
        run.max_dev = std::max(run.max_dev, std::abs(s_hat - steps[k].survival));
    }
    run.total_events = removed;
    run.s_hat_end = s_hat;
    if (removed + c > n_start) run.feasible = false;
    return run;
}

void emit_interval(std::vector<IpdRecord>& out, std::span<const KmStep> steps, const IntervalRun& run, double lo,
                   double width, int c, const std::string& arm)
{
    for (std::size_t k = 0; k < steps.size(); ++k)
        for (int e = 0; e < run.events[k]; ++e) out.push_back({steps[k].time, true, arm});
    for (int m = 0; m < c; ++m) out.push_back({lo + (m + 1) * width / (c + 1), false, arm});
}

// Censor counts chosen per gap between steps rather than spread uniformly.
// gap_censors[k] sit before step k; the extra last entry sits after the final step.
struct IntervalPlan {
    std::vector<int> events;
    std::vector<int> gap_censors;
    int total_events = 0;
    int total_censored = 0;
    double s_hat_end = 1.0;
    double max_dev = std::numeric_limits<double>::infinity();
};

// Dynamic programme over the number still at risk after each step. Used when
// uniform censoring cannot track the curve; keeps the least worst deviation.
// n_end < 0 leaves the final count free (last interval, remainder censored at the end).
std::optional<IntervalPlan> adaptive_interval(std::span<const KmStep> steps, double lo, double hi, int n_start,
                                              double s_hat, int n_end, std::optional<int> target_events)
{
    struct Node {
        bool valid = false;
        double dev = 0.0;
        double s = 1.0;
        double spread = 0.0;  // sum of squared gap counts, prefers even censoring
        int events = 0;
        int prev = -1;
        int m = 0;
        int d = 0;
    };
    const int floor_n = std::max(n_end, 0);
    const std::size_t K = steps.size();
    std::vector<std::vector<Node>> layer(K + 1, std::vector<Node>(n_start + 1));
    layer[0][n_start] = Node{true, 0.0, s_hat, 0.0, 0, -1, 0, 0};
    auto better = [](const Node& a, const Node& b) {
        if (!b.valid) return true;
        if (a.dev < b.dev - 1e-12) return true;
        if (a.dev > b.dev + 1e-12) return false;
        return a.spread < b.spread;
    };
    for (std::size_t k = 0; k < K; ++k) {
        const double prev_t = k == 0 ? lo : steps[k - 1].time;
        const bool gap_open = steps[k].time > prev_t;
        for (int np = floor_n; np <= n_start; ++np) {
            const Node& from = layer[k][np];
            if (!from.valid) continue;
            const int max_m = gap_open ? np - floor_n : 0;
            for (int m = 0; m <= max_m; ++m) {
                const int nr = np - m;
                int d_lo = 0, d_hi = 0;
                if (nr > 0 && from.s > 0.0) {
                    const double want = nr * (1.0 - steps[k].survival / from.s);
                    d_lo = std::clamp(static_cast<int>(std::floor(want)), 0, nr);
                    d_hi = std::clamp(static_cast<int>(std::ceil(want)), 0, nr);
                }
                for (int d = d_lo; d <= d_hi; ++d) {
                    if (nr - d < floor_n) continue;
                    Node to;
                    to.valid = true;
                    to.s = nr > 0 ? from.s * (1.0 - static_cast<double>(d) / nr) : from.s;
                    to.dev = std::max(from.dev, std::abs(to.s - steps[k].survival));
                    to.spread = from.spread + static_cast<double>(m) * m;
                    to.events = from.events + d;
                    to.prev = np;
                    to.m = m;
                    to.d = d;
                    Node& slot = layer[k + 1][nr - d];
                    if (better(to, slot)) slot = to;
                }
            }
        }
    }
    const bool tail_open = hi > (K > 0 ? steps[K - 1].time : lo);
    int pick = -1;
    for (int n = floor_n; n <= n_start; ++n) {
        const Node& node = layer[K][n];
        if (!node.valid) continue;
        if (n_end >= 0 && n > n_end && !tail_open) continue;
        if (target_events && node.events != *target_events) continue;
        if (pick < 0 || better(node, layer[K][pick])) pick = n;
    }
    if (pick < 0) return std::nullopt;

    IntervalPlan plan;
    plan.events.assign(K, 0);
    plan.gap_censors.assign(K + 1, 0);
    plan.max_dev = layer[K][pick].dev;
    plan.s_hat_end = layer[K][pick].s;
    plan.total_events = layer[K][pick].events;
    plan.gap_censors[K] = n_end >= 0 ? pick - n_end : 0;
    int n = pick;
    for (std::size_t k = K; k-- > 0;) {
        const Node& node = layer[k + 1][n];
        plan.events[k] = node.d;
        plan.gap_censors[k] = node.m;
        n = node.prev;
    }
    for (int c : plan.gap_censors) plan.total_censored += c;
    return plan;
}

void emit_plan(std::vector<IpdRecord>& out, std::span<const KmStep> steps, const IntervalPlan& plan, double lo,
               double hi, const std::string& arm)
{
    for (std::size_t k = 0; k <= steps.size(); ++k) {
        const double a = k == 0 ? lo : steps[k - 1].time;
        const double b = k < steps.size() ? steps[k].time : hi;
        const int m = plan.gap_censors[k];
        for (int i = 0; i < m; ++i) out.push_back({a + (i + 1) * (b - a) / (m + 1), false, arm});
        if (k < steps.size())
            for (int e = 0; e < plan.events[k]; ++e) out.push_back({steps[k].time, true, arm});
    }
}

// Integral of the step function over [a, b], held flat past its last step.
double area_under(const KmCurve& curve, double a, double b)
{
    const auto& steps = curve.steps;
    double area = 0.0;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const double lo = std::max(steps[k].time, a);
        const double hi = std::min(k + 1 < steps.size() ? steps[k + 1].time : b, b);
        if (hi > lo) area += steps[k].survival * (hi - lo);
    }
    return area;
}

} // namespace

double KmCurve::at(double t) const
{
    double s = 1.0;
    for (const auto& step : steps) {
        if (step.time > t) break;
        s = step.survival;
    }
    return s;
}

double KmCurve::end_time() const { return steps.empty() ? 0.0 : steps.back().time; }

void validate(const KmCurve& curve)
{
    if (curve.steps.empty()) throw InputError("KM curve: no steps");
    if (std::abs(curve.steps.front().survival - 1.0) > 1e-9) throw InputError("KM curve: survival must start at 1");
    for (std::size_t k = 0; k < curve.steps.size(); ++k) {
        const auto& s = curve.steps[k];
        if (!std::isfinite(s.time) || s.time < 0.0) throw InputError("KM curve: times must be finite and non-negative");
        if (s.survival < 0.0 || s.survival > 1.0) throw InputError("KM curve: survival outside [0, 1]");
        if (k > 0) {
            if (!(s.time > curve.steps[k - 1].time)) throw InputError("KM curve: times must be strictly increasing");
            if (s.survival > curve.steps[k - 1].survival) throw InputError("KM curve: survival must be non-increasing");
        }
    }
    for (std::size_t j = 0; j < curve.risk_table.size(); ++j) {
        const auto& r = curve.risk_table[j];
        if (r.n_at_risk < 0) throw InputError("risk table: negative number at risk");
        if (j > 0) {
            if (!(r.start > curve.risk_table[j - 1].start))
                throw InputError("risk table: interval starts must be strictly increasing");
            if (r.n_at_risk > curve.risk_table[j - 1].n_at_risk)
                throw InputError("risk table: numbers at risk must be non-increasing");
        }
    }
}

KmCurve km_estimate(std::span<const IpdRecord> data, std::span<const double> risk_grid)
{
    check_records(data, "km_estimate");
    const auto sorted = sorted_by_time(data);
    KmCurve curve;
    curve.steps.push_back({0.0, 1.0});
    double s = 1.0;
    for (const auto& row : event_table(sorted)) {
        s *= 1.0 - static_cast<double>(row.deaths) / row.at_risk;
        curve.steps.push_back({row.time, s});
    }
    const double last = sorted.back().time;
    if (curve.steps.back().time < last) curve.steps.push_back({last, s});

    for (double g : risk_grid) {
        const auto first = std::lower_bound(sorted.begin(), sorted.end(), g,
                                            [](const IpdRecord& r, double v) { return r.time < v; });
        curve.risk_table.push_back({g, static_cast<int>(sorted.end() - first)});
    }
    return curve;
}

std::vector<double> regular_grid(std::span<const IpdRecord> data, double step)
{
    check_records(data, "regular_grid");
    if (!(step > 0.0)) throw InputError("regular_grid: step must be positive");
    double last = 0.0;
    for (const auto& r : data) last = std::max(last, r.time);
    std::vector<double> grid;
    for (int k = 0; k * step < last; ++k) grid.push_back(k * step);
    return grid;
}

std::vector<IpdRecord> reconstruct_ipd(const KmCurve& curve, const ReconstructOptions& options)
{
    validate(curve);
    const auto& risk = curve.risk_table;
    if (risk.empty()) throw InputError("reconstruct_ipd: risk table needs at least one row");
    if (risk.front().start < 0.0) throw InputError("reconstruct_ipd: risk table starts before time 0");

    const auto& steps = curve.steps;
    for (std::size_t k = 1; k < steps.size(); ++k)
        if (steps[k].time < risk.front().start && steps[k].survival < steps[k - 1].survival)
            throw InputError("reconstruct_ipd: survival drops before the first risk-table interval");

    const double t_end = std::max(curve.end_time(), risk.back().start);
    if (!(t_end > 0.0)) throw InputError("reconstruct_ipd: curve has no follow-up beyond time 0");

    // Steps with a time inside [lo, hi) (the last interval is closed at t_end).
    auto steps_in = [&](double lo, double hi, bool closed) {
        auto first = std::lower_bound(steps.begin(), steps.end(), lo,
                                      [](const KmStep& s, double v) { return s.time < v; });
        auto last = closed ? std::upper_bound(first, steps.end(), hi,
                                              [](double v, const KmStep& s) { return v < s.time; })
                           : std::lower_bound(first, steps.end(), hi,
                                              [](const KmStep& s, double v) { return s.time < v; });
        // time-zero anchor carries no events
        if (first != last && first->time == 0.0) ++first;
        return std::span<const KmStep>(first, last);
    };

    std::vector<IpdRecord> out;
    double s_hat = 1.0;
    int censored_so_far = 0;
    const std::size_t n_intervals = risk.size();

    for (std::size_t j = 0; j + 1 < n_intervals; ++j) {
        const double lo = risk[j].start;
        const double hi = risk[j + 1].start;
        const int n_start = risk[j].n_at_risk;
        const int leaving = n_start - risk[j + 1].n_at_risk;
        const auto in = steps_in(lo, hi, false);
        const double width = hi - lo;

        // Scan every censoring count; prefer exact at-risk matches, then the best fit.
        int best_c = -1;
        IntervalRun best;
        int best_mismatch = std::numeric_limits<int>::max();
        for (int c = 0; c <= leaving; ++c) {
            IntervalRun run = run_interval(in, lo, width, n_start, s_hat, c, nullptr);
            if (!run.feasible) continue;
            const int mismatch = std::abs(run.total_events + c - leaving);
            if (mismatch < best_mismatch || (mismatch == best_mismatch && run.max_dev < best.max_dev - 1e-15)) {
                best_mismatch = mismatch;
                best = std::move(run);
                best_c = c;
            }
        }
        if (best_c < 0)
            throw ReconstructionError("reconstruct_ipd: no feasible allocation in interval " + interval_name(lo, hi));

        int c = best_c;
        if (best_mismatch != 0) {
            // Keep the event pattern, trim it if needed, and let censoring absorb the rest.
            std::vector<int> events = best.events;
            int surplus = best.total_events - leaving;
            for (std::size_t k = events.size(); surplus > 0 && k-- > 0;) {
                const int take = std::min(surplus, events[k]);
                events[k] -= take;
                surplus -= take;
            }
            int total = 0;
            for (int e : events) total += e;
            c = leaving - total;
            best = run_interval(in, lo, width, n_start, s_hat, c, &events);
            if (!best.feasible)
                throw ReconstructionError("reconstruct_ipd: no feasible allocation in interval " + interval_name(lo, hi));
        }
        if (best.max_dev > options.tolerance) {
            const auto plan = adaptive_interval(in, lo, hi, n_start, s_hat, risk[j + 1].n_at_risk, std::nullopt);
            if (!plan || plan->max_dev > options.tolerance)
                throw ReconstructionError("reconstruct_ipd: interval " + interval_name(lo, hi)
                                          + " cannot match the curve within tolerance with the given numbers at risk");
            emit_plan(out, in, *plan, lo, hi, options.arm);
            s_hat = plan->s_hat_end;
            censored_so_far += plan->total_censored;
            continue;
        }
        emit_interval(out, in, best, lo, width, c, options.arm);
        s_hat = best.s_hat_end;
        censored_so_far += c;
    }

    // Final interval: censoring rate carried over from earlier intervals.
    const double lo = risk.back().start;
    const int n_last = risk.back().n_at_risk;
    const double width = t_end - lo;
    const auto in = steps_in(lo, t_end, true);
    const double elapsed = lo - risk.front().start;
    const double rate = elapsed > 0.0 ? censored_so_far / elapsed : 0.0;
    const int c_guess = static_cast<int>(std::lround(rate * width));

    int prior_events = 0;
    for (const auto& r : out) prior_events += r.event ? 1 : 0;
    const std::optional<int> target =
        options.total_events ? std::optional<int>(*options.total_events - prior_events) : std::nullopt;
    if (target && *target < 0)
        throw ReconstructionError("reconstruct_ipd: total events already exceeded before interval "
                                  + interval_name(lo, t_end));

    struct Candidate {
        int c;
        IntervalRun run;
    };
    std::optional<Candidate> chosen;
    std::optional<Candidate> fallback;
    auto better = [&](const Candidate& cand, const std::optional<Candidate>& cur) {
        if (!cur) return true;
        return std::abs(cand.c - c_guess) < std::abs(cur->c - c_guess);
    };
    for (int c = 0; c <= n_last; ++c) {
        IntervalRun run = run_interval(in, lo, width, n_last, s_hat, c, nullptr);
        if (!run.feasible) continue;
        Candidate cand{c, run};
        if (!fallback || run.max_dev < fallback->run.max_dev - 1e-15) fallback = cand;
        if (run.max_dev > options.tolerance) continue;
        if (target && run.total_events != *target) continue;
        if (better(cand, chosen)) chosen = std::move(cand);
    }
    if (!chosen && target && fallback) {
        // Force the requested event total by editing the latest steps with events.
        std::vector<int> events = fallback->run.events;
        int diff = *target - fallback->run.total_events;
        for (std::size_t k = events.size(); diff < 0 && k-- > 0;) {
            const int take = std::min(-diff, events[k]);
            events[k] -= take;
            diff += take;
        }
        for (std::size_t k = events.size(); diff > 0 && k-- > 0;) {
            if (in[k].survival < (k > 0 ? in[k - 1].survival : 1.0) || k + 1 == events.size()) {
                events[k] += diff;
                diff = 0;
            }
        }
        IntervalRun run = run_interval(in, lo, width, n_last, s_hat, fallback->c, &events);
        if (run.feasible && diff == 0 && run.max_dev <= options.tolerance) chosen = Candidate{fallback->c, run};
    }
    if (!chosen) {
        const auto plan = adaptive_interval(in, lo, t_end, n_last, s_hat, -1, target);
        if (plan && plan->max_dev <= options.tolerance) {
            emit_plan(out, in, *plan, lo, t_end, options.arm);
            const int rest = n_last - plan->total_events - plan->total_censored;
            for (int m = 0; m < rest; ++m) out.push_back({t_end, false, options.arm});
            std::stable_sort(out.begin(), out.end(),
                             [](const IpdRecord& l, const IpdRecord& r) { return l.time < r.time; });
            return out;
        }
        throw ReconstructionError("reconstruct_ipd: interval " + interval_name(lo, t_end)
                                  + (target ? " cannot reach the requested total events within tolerance"
                                            : " cannot match the curve within tolerance"));
    }
    emit_interval(out, in, chosen->run, lo, width, chosen->c, options.arm);
    const int remaining = n_last - chosen->run.total_events - chosen->c;
    for (int m = 0; m < remaining; ++m) out.push_back({t_end, false, options.arm});

    std::stable_sort(out.begin(), out.end(), [](const IpdRecord& l, const IpdRecord& r) { return l.time < r.time; });
    return out;
}

double cox_partial_loglik(std::span<const IpdRecord> data, const std::string& reference_arm, double log_hr)
{
    const auto sorted = sorted_by_time(data);
    const int n = static_cast<int>(sorted.size());
    double ll = 0.0;
    double a0 = 0.0;
    // Walk backwards so the running sums cover the risk set {time >= t}.
    int i = n - 1;
    while (i >= 0) {
        const double t = sorted[i].time;
        int j = i;
        int d = 0;
        double s = 0.0;
        for (; j >= 0 && sorted[j].time == t; --j) {
            const double x = sorted[j].arm == reference_arm ? 0.0 : 1.0;
            a0 += std::exp(log_hr * x);
            if (sorted[j].event) {
                ++d;
                s += x;
            }
        }
        if (d > 0) ll += log_hr * s - d * std::log(a0);
        i = j;
    }
    return ll;
}

CoxFit cox_fit(std::span<const IpdRecord> data, const std::string& reference_arm)
{
    check_records(data, "cox_fit");
    std::set<std::string> arms;
    for (const auto& r : data) arms.insert(r.arm);
    if (arms.size() != 2 || !arms.count(reference_arm))
        throw InputError("cox_fit: need exactly two arms including reference arm '" + reference_arm + "'");

    const auto sorted = sorted_by_time(data);
    const int n = static_cast<int>(sorted.size());
    std::map<std::string, int> events_by_arm;
    for (const auto& r : sorted) events_by_arm[r.arm] += r.event ? 1 : 0;
    int total_events = 0;
    for (const auto& [arm, e] : events_by_arm) total_events += e;
    if (total_events == 0) throw InsufficientDataError("cox_fit: no events in the pooled data");

    auto evaluate = [&](double beta, double& score, double& info) {
        double ll = 0.0;
        double a0 = 0.0;
        double a1 = 0.0;
        score = 0.0;
        info = 0.0;
        int i = n - 1;
        while (i >= 0) {
            const double t = sorted[i].time;
            int j = i;
            int d = 0;
            double s = 0.0;
            for (; j >= 0 && sorted[j].time == t; --j) {
                const double x = sorted[j].arm == reference_arm ? 0.0 : 1.0;
                const double w = std::exp(beta * x);
                a0 += w;
                a1 += w * x;
                if (sorted[j].event) {
                    ++d;
                    s += x;
                }
            }
            if (d > 0) {
                const double p = a1 / a0;
                ll += beta * s - d * std::log(a0);
                score += s - d * p;
                info += d * p * (1.0 - p);
            }
            i = j;
        }
        return ll;
    };

    CoxFit fit;
    fit.reference_arm = reference_arm;
    for (const auto& a : arms)
        if (a != reference_arm) fit.comparison_arm = a;

    double beta = 0.0;
    double score = 0.0;
    double info = 0.0;
    double ll = evaluate(beta, score, info);
    for (fit.iterations = 0; fit.iterations < 50; ++fit.iterations) {
        if (std::abs(score) < 1e-8) {
            fit.converged = true;
            break;
        }
        if (!(info > 0.0)) break;
        double step = score / info;
        double s_new = 0.0;
        double i_new = 0.0;
        double ll_new = evaluate(beta + step, s_new, i_new);
        for (int halving = 0; halving < 30 && ll_new < ll - 1e-12; ++halving) {
            step *= 0.5;
            ll_new = evaluate(beta + step, s_new, i_new);
        }
        beta += step;
        ll = ll_new;
        score = s_new;
        info = i_new;
        if (std::abs(beta) > 20.0) break;
    }
    // An arm without events makes the likelihood monotone in beta.
    const bool monotone = events_by_arm[reference_arm] == 0 || events_by_arm[fit.comparison_arm] == 0
                          || std::abs(beta) > 20.0;
    if (monotone) fit.converged = false;
    fit.log_hr = beta;
    fit.se = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
    return fit;
}

double WeibullFit::lambda() const { return std::exp(-intercept / scale); }
double WeibullFit::gamma() const { return 1.0 / scale; }

double weibull_loglik(std::span<const IpdRecord> data, double intercept, double scale)
{
    if (!(scale > 0.0)) return -std::numeric_limits<double>::infinity();
    double ll = 0.0;
    const double log_scale = std::log(scale);
    for (const auto& r : data) {
        const double y = std::log(r.time);
        const double z = (y - intercept) / scale;
        ll -= std::exp(z);
        if (r.event) ll += z - log_scale - y;
    }
    return ll;
}

WeibullFit weibull_fit(std::span<const IpdRecord> data)
{
    check_records(data, "weibull_fit");
    int events = 0;
    for (const auto& r : data) events += r.event ? 1 : 0;
    if (events < 2) throw InsufficientDataError("weibull_fit: need at least 2 events, got " + std::to_string(events));

    // Start from moment estimates of log time; Newton then runs in (beta, log alpha).
    double mean_y = 0.0;
    for (const auto& r : data) mean_y += std::log(r.time);
    mean_y /= static_cast<double>(data.size());
    double var_y = 0.0;
    for (const auto& r : data) var_y += (std::log(r.time) - mean_y) * (std::log(r.time) - mean_y);
    var_y /= std::max<double>(1.0, static_cast<double>(data.size()) - 1.0);
    const double alpha0 = std::max(0.05, std::sqrt(var_y) * std::sqrt(6.0) / 3.141592653589793);

    Eigen::Vector2d theta(mean_y + 0.5772156649 * alpha0, std::log(alpha0));

    auto derivatives = [&](const Eigen::Vector2d& th, Eigen::Vector2d& grad, Eigen::Matrix2d& hess) {
        const double beta = th(0);
        const double alpha = std::exp(th(1));
        grad.setZero();
        hess.setZero();
        for (const auto& r : data) {
            const double delta = r.event ? 1.0 : 0.0;
            const double z = (std::log(r.time) - beta) / alpha;
            const double ez = std::exp(z);
            const double dz = delta - ez;
            grad(0) += -dz / alpha;
            grad(1) += -delta - z * dz;
            hess(0, 0) += -ez / (alpha * alpha);
            hess(0, 1) += (-z * ez + dz) / alpha;
            hess(1, 1) += z * delta - z * ez - z * z * ez;
        }
        hess(1, 0) = hess(0, 1);
    };
    auto loglik = [&](const Eigen::Vector2d& th) { return weibull_loglik(data, th(0), std::exp(th(1))); };

    WeibullFit fit;
    Eigen::Vector2d grad;
    Eigen::Matrix2d hess;
    double ll = loglik(theta);
    bool converged = false;
    for (fit.iterations = 0; fit.iterations < 100; ++fit.iterations) {
        derivatives(theta, grad, hess);
        if (grad.cwiseAbs().maxCoeff() < 1e-8 * std::max(1.0, static_cast<double>(data.size()))) {
            converged = true;
            break;
        }
        Eigen::Vector2d step = hess.ldlt().solve(-grad);
        // Fall back to gradient ascent when the Hessian is not negative definite.
        if (!step.allFinite() || grad.dot(step) <= 0.0) step = grad / std::max(1.0, grad.norm());
        double ll_new = loglik(theta + step);
        for (int halving = 0; halving < 40 && !(ll_new >= ll - 1e-12); ++halving) {
            step *= 0.5;
            ll_new = loglik(theta + step);
        }
        theta += step;
        const bool tiny = step.cwiseAbs().maxCoeff() < 1e-12;
        ll = ll_new;
        if (tiny) {
            derivatives(theta, grad, hess);
            converged = true;
            break;
        }
    }
    if (!converged) throw NumericalError("weibull_fit: no convergence after 100 iterations");

    derivatives(theta, grad, hess);
    const double alpha = std::exp(theta(1));
    // Observed information in (beta, log alpha), mapped to (beta, alpha) via the Jacobian.
    const Eigen::Matrix2d cov_log = (-hess).inverse();
    Eigen::Matrix2d jac = Eigen::Matrix2d::Identity();
    jac(1, 1) = alpha;
    const Eigen::Matrix2d cov = jac * cov_log * jac.transpose();

    fit.intercept = theta(0);
    fit.scale = alpha;
    fit.covariance = Sym2d::from_matrix(cov);
    fit.log_likelihood = ll;
    return fit;
}

MeanSurvival restricted_mean(std::span<const IpdRecord> data, double horizon)
{
    if (!(horizon > 0.0)) throw InputError("restricted_mean: horizon must be positive");
    check_records(data, "restricted_mean");
    const KmCurve curve = km_estimate(data);
    MeanSurvival out = restricted_mean(curve, horizon);

    const auto sorted = sorted_by_time(data);
    double var = 0.0;
    for (const auto& row : event_table(sorted)) {
        if (row.time > horizon || row.deaths >= row.at_risk) continue;
        const double area = area_under(curve, row.time, horizon);
        var += area * area * row.deaths / (static_cast<double>(row.at_risk) * (row.at_risk - row.deaths));
    }
    out.se = std::sqrt(var);
    return out;
}

MeanSurvival restricted_mean(const KmCurve& curve, double horizon)
{
    if (!(horizon > 0.0)) throw InputError("restricted_mean: horizon must be positive");
    validate(curve);
    MeanSurvival out;
    out.horizon = horizon;
    const auto& steps = curve.steps;
    if (steps.size() < 2 || horizon < steps[1].time)
        out.warnings.push_back("horizon precedes the first observation time");
    if (horizon > curve.end_time())
        out.warnings.push_back("horizon beyond last follow-up; curve held at its final value");
    const double area = area_under(curve, 0.0, horizon);
    out.mean = area;
    return out;
}

LogRate log_hazard_rate(std::span<const IpdRecord> data)
{
    check_records(data, "log_hazard_rate");
    LogRate out;
    for (const auto& r : data) {
        out.exposure += r.time;
        out.events += r.event ? 1 : 0;
    }
    if (out.events == 0) throw InsufficientDataError("log_hazard_rate: no events");
    out.log_rate = std::log(out.events / out.exposure);
    out.se = 1.0 / std::sqrt(static_cast<double>(out.events));
    return out;
}

std::vector<IpdRecord> select_arm(std::span<const IpdRecord> data, const std::string& arm)
{
    std::vector<IpdRecord> out;
    for (const auto& r : data)
        if (r.arm == arm) out.push_back(r);
    return out;
}

} // namespace evsyn::survival
