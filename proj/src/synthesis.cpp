#include "evsyn/synthesis.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace evsyn::synthesis {

using mcmc::Expr;
using mcmc::LinearForm;
using mcmc::ModelGraph;
using mcmc::ParamId;
using mcmc::Values;

std::string to_string(Outcome o) { return o == Outcome::os ? "OS" : "PFS"; }

Outcome parse_outcome(const std::string& s)
{
    std::string u;
    for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (u == "OS") return Outcome::os;
    if (u == "PFS" || u == "TTP") return Outcome::pfs;
    throw InputError("unknown outcome '" + s + "' (expected OS or PFS)");
}

StudyOutcome StudyOutcome::from_hr(std::string study, std::string treatment, std::string comparator,
                                   Outcome outcome, double hr, double lower, double upper)
{
    if (!(hr > 0.0) || !(lower <= hr) || !(hr <= upper))
        throw InputError("study '" + study + "': HR must lie inside its interval");
    StudyOutcome s;
    s.study = std::move(study);
    s.treatment = std::move(treatment);
    s.comparator = std::move(comparator);
    s.outcome = outcome;
    s.log_hr = std::log(hr);
    s.se = se_from_ci(lower, upper);
    return s;
}

void validate(const StudyOutcome& row)
{
    if (row.study.empty()) throw InputError("study row without a study id");
    if (row.treatment.empty() || row.comparator.empty())
        throw InputError("study '" + row.study + "': treatment and comparator labels are required");
    if (row.log_hr && !row.se) throw InputError("study '" + row.study + "': se may be missing only when log_hr is");
    if (row.log_hr && !std::isfinite(*row.log_hr)) throw InputError("study '" + row.study + "': log_hr not finite");
    if (row.se && !(*row.se > 0.0 && std::isfinite(*row.se)))
        throw InputError("study '" + row.study + "': se must be positive");
    if (row.n && !(*row.n > 0.0)) throw InputError("study '" + row.study + "': n must be positive");
}

namespace {

void require_scale_prior(const Distribution& d, const std::string& what)
{
    evsyn::validate(d);
    const bool ok = std::holds_alternative<HalfNormal>(d) || std::holds_alternative<Gamma>(d)
        || (std::holds_alternative<Uniform>(d) && std::get<Uniform>(d).lo >= 0.0);
    if (!ok) throw InputError(what + ": prior must have support on [0, inf), got " + describe(d));
}

std::vector<StudyOutcome> complete_rows(std::span<const StudyOutcome> rows, const char* who)
{
    std::vector<StudyOutcome> out;
    for (const auto& r : rows) {
        validate(r);
        if (r.complete()) out.push_back(r);
    }
    if (out.empty()) throw InsufficientDataError(std::string(who) + ": no complete study rows");
    return out;
}

void require_single_contrast(const std::vector<StudyOutcome>& rows, const char* who)
{
    for (const auto& r : rows) {
        if (r.outcome != rows.front().outcome)
            throw InputError(std::string(who) + ": rows mix outcomes");
        if (r.treatment != rows.front().treatment || r.comparator != rows.front().comparator)
            throw InputError(std::string(who) + ": rows mix contrasts (" + r.treatment + " vs " + r.comparator
                             + " and " + rows.front().treatment + " vs " + rows.front().comparator + ")");
    }
}

std::optional<mcmc::Diagnostics> maybe_diagnose(const mcmc::ChainOutput& out, std::vector<std::string>& warnings)
{
    if (out.chains.size() < 2 || out.chains.front().draws.rows() < 100) return std::nullopt;
    auto d = mcmc::diagnose(out);
    for (const auto& p : d.parameters)
        if (p.flagged) warnings.push_back("split R-hat of '" + p.name + "' is " + std::to_string(*p.rhat));
    return d;
}

Expr product(ParamId a, ParamId b, double k = 1.0)
{
    return Expr{{a, b}, [a, b, k](Values v) { return k * v[a] * v[b]; }};
}

double geometric_mean(const std::vector<double>& x)
{
    double s = 0.0;
    for (double v : x) s += std::log(v);
    return std::exp(s / static_cast<double>(x.size()));
}

} // namespace

HrEstimate fixed_effect_ma(std::span<const StudyOutcome> rows)
{
    const auto data = complete_rows(rows, "fixed_effect_ma");
    require_single_contrast(data, "fixed_effect_ma");
    double sw = 0.0, swy = 0.0;
    for (const auto& r : data) {
        const double w = 1.0 / (*r.se * *r.se);
        sw += w;
        swy += w * *r.log_hr;
    }
    return HrEstimate::from_log(swy / sw, 1.0 / std::sqrt(sw));
}

ReResult random_effects_ma(std::span<const StudyOutcome> rows, const RePriors& priors, const mcmc::ChainConfig& config)
{
    const auto data = complete_rows(rows, "random_effects_ma");
    require_single_contrast(data, "random_effects_ma");
    ReResult res;
    if (data.size() == 1) {
        res.pooled = fixed_effect_ma(data);
        res.warnings.push_back("one study only: random-effects pooling collapses to the fixed-effect estimate");
        return res;
    }
    require_scale_prior(priors.tau, "random_effects_ma tau");
    ModelGraph m;
    const ParamId eta = m.add_parameter("eta", priors.mean);
    const ParamId tau = m.add_parameter("tau", priors.tau);
    for (const auto& r : data) {
        const ParamId mu = m.add_latent("mu[" + r.study + "]", 0.0);
        m.add_normal({LinearForm::constant(*r.log_hr), LinearForm::param(mu), Expr::constant(*r.se)});
        m.add_normal({LinearForm::param(mu), LinearForm::param(eta), Expr::param(tau)});
    }
    const auto out = mcmc::run_chain(m, config);
    res.log_hr_draws = out.pooled("eta");
    res.pooled = HrEstimate::from_log_draws(res.log_hr_draws);
    res.tau = out.summary("tau");
    res.warnings = out.warnings;
    res.diagnostics = maybe_diagnose(out, res.warnings);
    return res;
}

StudyOutcome PredictedEffect::as_study_outcome() const
{
    StudyOutcome s;
    s.study = study;
    s.treatment = treatment;
    s.comparator = comparator;
    s.outcome = outcome;
    s.log_hr = effect.log_hr;
    s.se = se;
    return s;
}

const PredictedEffect& BrmaPosterior::prediction(const std::string& study, Outcome outcome) const
{
    for (const auto& p : predictions)
        if (p.study == study && p.outcome == outcome) return p;
    throw InputError("brma: no prediction for " + study + " " + to_string(outcome));
}

BrmaPosterior brma_fit(std::span<const StudyOutcome> rows, const BrmaConfig& config)
{
    struct Study {
        std::string id;
        const StudyOutcome* row[2] = {nullptr, nullptr};
    };
    std::vector<Study> studies;
    for (const auto& r : rows) {
        validate(r);
        auto it = std::find_if(studies.begin(), studies.end(), [&](const Study& s) { return s.id == r.study; });
        if (it == studies.end()) {
            studies.push_back({r.study, {nullptr, nullptr}});
            it = studies.end() - 1;
        }
        const int k = r.outcome == Outcome::os ? 0 : 1;
        if (it->row[k]) throw InputError("brma: study '" + r.study + "' has two " + to_string(r.outcome) + " rows");
        it->row[k] = &r;
    }
    auto observed = [](const Study& s, int k) { return s.row[k] && s.row[k]->complete(); };
    int both = 0;
    for (const auto& s : studies) both += observed(s, 0) && observed(s, 1) ? 1 : 0;
    if (both < 2)
        throw InsufficientDataError("brma: need at least two studies with both outcomes observed (found "
                                    + std::to_string(both) + "); the between-study correlation is not identifiable");

    require_scale_prior(config.tau_prior, "brma tau");
    BrmaPosterior post;
    ModelGraph m;
    const ParamId eta = m.add_parameter("eta_os", config.eta_os_prior);
    const ParamId lambda0 = m.add_parameter("lambda0", config.lambda0_prior);
    const ParamId tau_o = m.add_parameter("tau_os", config.tau_prior);
    const ParamId tau_p = m.add_parameter("tau_pfs", config.tau_prior);
    const ParamId rb = config.between_correlation ? m.add_parameter("rho_b", Uniform{-1.0, 1.0}) : -1;

    const int n = static_cast<int>(studies.size());
    std::vector<ParamId> mu_o(n), mu_p(n);
    for (int i = 0; i < n; ++i) {
        mu_o[i] = m.add_latent("mu_os[" + studies[i].id + "]", 0.0);
        mu_p[i] = m.add_latent("mu_pfs[" + studies[i].id + "]", 0.0);
    }

    // Between-study level, product-normal form.
    for (int i = 0; i < n; ++i) m.add_normal({LinearForm::param(mu_o[i]), LinearForm::param(eta), Expr::param(tau_o)});
    Expr psi_pfs = Expr::param(tau_p);
    if (rb >= 0) {
        psi_pfs = Expr{{tau_p, rb}, [tau_p, rb](Values v) { return v[tau_p] * std::sqrt(1.0 - v[rb] * v[rb]); }};
    }
    for (int i = 0; i < n; ++i) {
        LinearForm mean = LinearForm::param(lambda0);
        if (rb >= 0) {
            for (int j = 0; j < n; ++j) {
                const double w = (i == j ? 1.0 : 0.0) - 1.0 / n;
                mean.add(mu_o[j], Expr{{rb, tau_p, tau_o},
                                       [=](Values v) { return w * v[rb] * v[tau_p] / v[tau_o]; }});
            }
        }
        m.add_normal({LinearForm::param(mu_p[i]), mean, psi_pfs});
    }
    if (rb >= 0) {
        m.add_custom({{rb, tau_p, tau_o}, [=](Values v) {
                          const double l1 = v[rb] * v[tau_p] / v[tau_o];
                          const double psi2 = v[tau_p] * v[tau_p] - l1 * l1 * v[tau_o] * v[tau_o];
                          return psi2 < -1e-12 * v[tau_p] * v[tau_p] ? -std::numeric_limits<double>::infinity() : 0.0;
                      }});
    }

    // Exchangeable standard errors for any outcome with a missing value.
    struct SeSource {
        std::optional<double> fixed;
        ParamId v = -1;
        double scale = 1.0;
    };
    std::vector<std::array<SeSource, 2>> se(n);
    std::vector<std::array<std::optional<ParamId>, 2>> y_param(n);
    for (int k = 0; k < 2; ++k) {
        const std::string tag = k == 0 ? "os" : "pfs";
        bool any_missing = false;
        bool all_n = true;
        for (const auto& s : studies) {
            any_missing = any_missing || !observed(s, k);
            const StudyOutcome* ref = s.row[k] ? s.row[k] : s.row[1 - k];
            all_n = all_n && ref->n.has_value();
        }
        VarianceModel vm = config.variance_model;
        if (any_missing && vm == VarianceModel::population && !all_n) {
            vm = VarianceModel::log_variance;
            post.warnings.push_back("brma: sample sizes missing for some " + to_string(k == 0 ? Outcome::os : Outcome::pfs)
                                    + " rows; exchanging log variances instead of population variances");
        }
        std::optional<ParamId> vm_mean, vm_sd;
        if (any_missing) {
            vm_mean = m.add_parameter("m_" + tag, config.variance_mean_prior);
            vm_sd = m.add_parameter("s_" + tag, config.variance_sd_prior);
        }
        for (int i = 0; i < n; ++i) {
            const Study& s = studies[i];
            const StudyOutcome* ref = s.row[k] ? s.row[k] : s.row[1 - k];
            const double scale = vm == VarianceModel::population && ref->n ? *ref->n : 1.0;
            if (observed(s, k)) {
                se[i][k].fixed = *s.row[k]->se;
                if (any_missing) {
                    const double lv = std::log(scale * *s.row[k]->se * *s.row[k]->se);
                    m.add_normal({LinearForm::constant(lv), LinearForm::param(*vm_mean), Expr::param(*vm_sd)});
                }
            } else {
                const ParamId v = m.add_latent("v_" + tag + "[" + s.id + "]", 0.0);
                m.add_normal({LinearForm::param(v), LinearForm::param(*vm_mean), Expr::param(*vm_sd)});
                se[i][k].v = v;
                se[i][k].scale = scale;
                y_param[i][k] = m.add_latent("y_" + tag + "[" + s.id + "]", 0.0);
                m.add_deterministic("se_" + tag + "[" + s.id + "]",
                                    Expr{{v}, [v, scale](Values x) { return std::sqrt(std::exp(x[v]) / scale); }});
            }
        }
    }
    auto se_expr = [&](int i, int k) -> Expr {
        const SeSource src = se[i][k];
        if (src.fixed) return Expr::constant(*src.fixed);
        return Expr{{src.v}, [src](Values x) { return std::sqrt(std::exp(x[src.v]) / src.scale); }};
    };
    auto y_form = [&](int i, int k) -> LinearForm {
        if (y_param[i][k]) return LinearForm::param(*y_param[i][k]);
        return LinearForm::constant(*studies[i].row[k]->log_hr);
    };

    // Within-study level: Y_OS marginal times Y_PFS | Y_OS.
    for (int i = 0; i < n; ++i) {
        const Expr so = se_expr(i, 0);
        const Expr sp = se_expr(i, 1);
        m.add_normal({y_form(i, 0), LinearForm::param(mu_o[i]), so});
        if (!config.within_correlation) {
            m.add_normal({y_form(i, 1), LinearForm::param(mu_p[i]), sp});
            continue;
        }
        const ParamId rw = m.add_parameter("rho_w[" + studies[i].id + "]", Uniform{-1.0, 1.0});
        std::vector<ParamId> kdeps = so.deps;
        kdeps.insert(kdeps.end(), sp.deps.begin(), sp.deps.end());
        kdeps.push_back(rw);
        // slope of the conditional mean on Y_OS
        const Expr slope{kdeps, [=](Values v) { return v[rw] * sp(v) / so(v); }};
        const Expr neg_slope{kdeps, [=](Values v) { return -v[rw] * sp(v) / so(v); }};
        LinearForm mean = LinearForm::param(mu_p[i]);
        mean.add(mu_o[i], neg_slope);
        if (y_param[i][0]) {
            mean.add(*y_param[i][0], slope);
        } else {
            const double yo = *studies[i].row[0]->log_hr;
            mean.offset = Expr{kdeps, [=](Values v) { return slope(v) * yo; }};
        }
        std::vector<ParamId> sdeps = sp.deps;
        sdeps.push_back(rw);
        const Expr sd{sdeps, [=](Values v) { return sp(v) * std::sqrt(1.0 - v[rw] * v[rw]); }};
        m.add_normal({y_form(i, 1), mean, sd});
    }

    // Monitored functions of the hyperparameters.
    if (rb >= 0) {
        m.add_deterministic("lambda1", Expr{{rb, tau_p, tau_o}, [=](Values v) { return v[rb] * v[tau_p] / v[tau_o]; }});
        m.add_deterministic("psi2_pfs", Expr{{rb, tau_p}, [=](Values v) {
                                                 return v[tau_p] * v[tau_p] * (1.0 - v[rb] * v[rb]);
                                             }});
    } else {
        m.add_deterministic("lambda1", Expr::constant(0.0));
        m.add_deterministic("psi2_pfs", product(tau_p, tau_p));
    }
    m.add_deterministic("psi2_os", product(tau_o, tau_o));

    post.output = mcmc::run_chain(m, config.chain);
    const auto& out = post.output;
    for (const auto& w : out.warnings) post.warnings.push_back(w);
    post.constraint_rejections = out.rejected_invalid();
    for (const std::string name : {"eta_os", "lambda0", "lambda1", "psi2_os", "psi2_pfs", "tau_os", "tau_pfs"})
        post.summaries[name] = out.summary(name);
    if (rb >= 0) post.summaries["rho_b"] = out.summary("rho_b");
    for (const auto& s : studies) {
        post.summaries["mu_os[" + s.id + "]"] = out.summary("mu_os[" + s.id + "]");
        post.summaries["mu_pfs[" + s.id + "]"] = out.summary("mu_pfs[" + s.id + "]");
        if (config.within_correlation) post.summaries["rho_w[" + s.id + "]"] = out.summary("rho_w[" + s.id + "]");
    }
    post.pooled_os = HrEstimate::from_log_draws(out.pooled("eta_os"));
    post.pooled_pfs = HrEstimate::from_log_draws(out.pooled("lambda0"));

    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 2; ++k) {
            if (!y_param[i][k]) continue;
            const std::string tag = k == 0 ? "os" : "pfs";
            const Study& s = studies[i];
            const StudyOutcome* ref = s.row[k] ? s.row[k] : s.row[1 - k];
            PredictedEffect p;
            p.study = s.id;
            p.treatment = ref->treatment;
            p.comparator = ref->comparator;
            p.outcome = k == 0 ? Outcome::os : Outcome::pfs;
            p.log_hr_draws = out.pooled("y_" + tag + "[" + s.id + "]");
            p.effect = HrEstimate::from_log_draws(p.log_hr_draws);
            const auto se_draws = out.pooled("se_" + tag + "[" + s.id + "]");
            p.se_draws = summarize(se_draws);
            p.se = geometric_mean(se_draws);
            post.predictions.push_back(std::move(p));
        }
    }
    post.diagnostics = maybe_diagnose(out, post.warnings);
    return post;
}

Contrast Contrast::from(const StudyOutcome& row)
{
    if (!row.complete()) throw InputError("contrast: study '" + row.study + "' has no estimate");
    return {row.treatment, row.comparator, *row.log_hr, *row.se};
}

Contrast Contrast::from(const std::string& treatment, const std::string& comparator, const HrEstimate& est)
{
    return {treatment, comparator, est.log_hr, est.se};
}

Contrast bucher_indirect(const Contrast& ac, const Contrast& bc)
{
    if (ac.comparator != bc.comparator)
        throw InputError("bucher_indirect: comparators differ ('" + ac.comparator + "' vs '" + bc.comparator + "')");
    if (!(ac.se >= 0.0) || !(bc.se >= 0.0)) throw InputError("bucher_indirect: standard errors must be non-negative");
    return {ac.treatment, bc.treatment, ac.log_hr - bc.log_hr, std::sqrt(ac.se * ac.se + bc.se * bc.se)};
}

Contrast indirect_via_common(const Contrast& first, const Contrast& second)
{
    if (first.comparator == second.comparator) return bucher_indirect(first, second);
    if (first.comparator == second.treatment) return bucher_indirect(first, second.inverted());
    if (first.treatment == second.comparator) return bucher_indirect(first.inverted(), second);
    if (first.treatment == second.treatment) return bucher_indirect(first.inverted(), second.inverted());
    throw InputError("indirect comparison: no common comparator between " + first.treatment + " vs "
                     + first.comparator + " and " + second.treatment + " vs " + second.comparator);
}

std::vector<double> bucher_draws(std::span<const double> ac, std::span<const double> bc)
{
    if (ac.size() != bc.size() || ac.empty())
        throw InputError("bucher_draws: need two non-empty samples of equal length");
    std::vector<double> out(ac.size());
    for (std::size_t k = 0; k < ac.size(); ++k) out[k] = ac[k] - bc[k];
    return out;
}

std::vector<std::vector<std::string>> components(std::span<const StudyOutcome> rows)
{
    std::map<std::string, std::string> parent;
    std::function<std::string(const std::string&)> root = [&](const std::string& x) -> std::string {
        auto& p = parent[x];
        if (p.empty() || p == x) {
            p = x;
            return x;
        }
        p = root(p);
        return p;
    };
    for (const auto& r : rows) {
        const auto a = root(r.treatment);
        const auto b = root(r.comparator);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
    std::map<std::string, std::vector<std::string>> groups;
    std::vector<std::string> names;
    for (const auto& [name, p] : parent) names.push_back(name);
    for (const auto& name : names) groups[root(name)].push_back(name);
    std::vector<std::vector<std::string>> out;
    for (auto& [r, g] : groups) {
        std::sort(g.begin(), g.end());
        out.push_back(std::move(g));
    }
    return out;
}

const NmaContrast& NmaResult::get(const std::string& treatment, const std::string& comparator) const
{
    for (const auto& c : contrasts)
        if (c.contrast.treatment == treatment && c.contrast.comparator == comparator) return c;
    throw InputError("nma: no contrast " + treatment + " vs " + comparator);
}

std::vector<double> NmaResult::draws(const std::string& treatment, const std::string& comparator) const
{
    auto basic = [&](const std::string& t) -> std::vector<double> {
        if (t == reference) return {};
        if (std::find(treatments.begin(), treatments.end(), t) == treatments.end())
            throw InputError("nma: unknown treatment '" + t + "'");
        return output.pooled("d[" + t + "]");
    };
    const auto a = basic(treatment);
    const auto b = basic(comparator);
    const std::size_t len = std::max(a.size(), b.size());
    std::vector<double> out(len, 0.0);
    for (std::size_t k = 0; k < len; ++k) out[k] = (a.empty() ? 0.0 : a[k]) - (b.empty() ? 0.0 : b[k]);
    return out;
}

NmaResult nma_fit(std::span<const StudyOutcome> rows, const NmaConfig& config)
{
    const auto data = complete_rows(rows, "nma_fit");
    for (const auto& r : data)
        if (r.outcome != data.front().outcome) throw InputError("nma_fit: rows mix outcomes");
    const auto comps = components(data);
    if (comps.size() > 1) {
        std::ostringstream os;
        os << "nma_fit: treatment network is disconnected:";
        for (std::size_t c = 0; c < comps.size(); ++c) {
            os << (c ? " |" : "") << " {";
            for (std::size_t k = 0; k < comps[c].size(); ++k) os << (k ? ", " : "") << comps[c][k];
            os << "}";
        }
        throw InputError(os.str());
    }

    NmaResult res;
    res.treatments = comps.front();
    res.reference = config.reference.value_or(res.treatments.front());
    if (std::find(res.treatments.begin(), res.treatments.end(), res.reference) == res.treatments.end())
        throw InputError("nma_fit: reference treatment '" + res.reference + "' is not in the network");

    ModelGraph m;
    std::map<std::string, ParamId> d;
    for (const auto& t : res.treatments)
        if (t != res.reference) d[t] = m.add_parameter("d[" + t + "]", config.effect_prior);
    auto contrast_form = [&](const StudyOutcome& r) {
        LinearForm f = LinearForm::constant(0.0);
        if (r.treatment != res.reference) f.add(d.at(r.treatment), 1.0);
        if (r.comparator != res.reference) f.add(d.at(r.comparator), -1.0);
        return f;
    };
    std::optional<ParamId> tau;
    if (config.random_effects) {
        require_scale_prior(config.tau_prior, "nma tau");
        tau = m.add_parameter("tau", config.tau_prior);
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto& r = data[k];
        if (tau) {
            const ParamId delta = m.add_latent("delta[" + std::to_string(k) + ":" + r.study + "]", 0.0);
            m.add_normal({LinearForm::constant(*r.log_hr), LinearForm::param(delta), Expr::constant(*r.se)});
            m.add_normal({LinearForm::param(delta), contrast_form(r), Expr::param(*tau)});
        } else {
            m.add_normal({LinearForm::constant(*r.log_hr), contrast_form(r), Expr::constant(*r.se)});
        }
    }
    res.output = mcmc::run_chain(m, config.chain);
    res.warnings = res.output.warnings;
    if (tau) res.tau = res.output.summary("tau");
    for (std::size_t i = 0; i < res.treatments.size(); ++i) {
        for (std::size_t j = i + 1; j < res.treatments.size(); ++j) {
            const auto x = res.draws(res.treatments[j], res.treatments[i]);
            const auto s = summarize(x);
            NmaContrast c;
            c.contrast = {res.treatments[j], res.treatments[i], s.mean, s.sd};
            c.hr = HrEstimate::from_log_draws(x);
            res.contrasts.push_back(c);
            NmaContrast inv;
            inv.contrast = c.contrast.inverted();
            std::vector<double> neg(x.size());
            std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
            inv.hr = HrEstimate::from_log_draws(neg);
            res.contrasts.push_back(inv);
        }
    }
    res.diagnostics = maybe_diagnose(res.output, res.warnings);
    return res;
}

} // namespace evsyn::synthesis
