#include "evsyn/pipeline.hpp"

#include "evsyn/error.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <Eigen/Core>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#ifndef EVSYN_VERSION
#define EVSYN_VERSION "0.0.0"
#endif

namespace evsyn::pipeline {

namespace fs = std::filesystem;
using io::json;
using synthesis::Contrast;
using synthesis::Outcome;
using synthesis::StudyOutcome;

std::string version() { return EVSYN_VERSION; }

std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("sha256: digest failed");
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(io::read_text(path)); }

// Configuration

namespace {

std::string get_str(const json& j, const char* key, const std::string& where)
{
    if (!j.contains(key) || !j.at(key).is_string()) throw InputError(where + ": missing string '" + key + "'");
    return j.at(key).get<std::string>();
}

double get_num(const json& j, const char* key, const std::string& where)
{
    if (!j.contains(key) || !j.at(key).is_number()) throw InputError(where + ": missing number '" + key + "'");
    return j.at(key).get<double>();
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

Distribution scale_prior(const json& j, const std::string& where)
{
    try {
        return io::distribution_from_json(j);
    } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
    }
}

OutcomeInput outcome_from_json(const json& j, const std::string& where)
{
    OutcomeInput o;
    if (j.is_null()) return o;
    if (j.contains("treatment_curve")) {
        o.kind = OutcomeInput::curves;
        o.treatment_curve = get_str(j, "treatment_curve", where);
        o.comparator_curve = get_str(j, "comparator_curve", where);
    } else if (j.contains("hr")) {
        o.kind = OutcomeInput::reported;
        const double hr = get_num(j, "hr", where), lo = get_num(j, "lower", where), hi = get_num(j, "upper", where);
        if (!(lo > 0.0 && lo < hr && hr < hi)) throw InputError(where + ": need 0 < lower < hr < upper");
        o.log_hr = std::log(hr);
        o.se = se_from_ci(lo, hi);
    } else if (j.contains("log_hr")) {
        o.kind = OutcomeInput::reported;
        o.log_hr = get_num(j, "log_hr", where);
        o.se = get_num(j, "se", where);
    } else {
        throw InputError(where + ": expected curves, hr with interval, log_hr with se, or null");
    }
    return o;
}

} // namespace

std::vector<fs::path> PipelineConfig::inputs() const
{
    std::vector<fs::path> v{source};
    for (const auto& c : curves) {
        v.push_back(c.km);
        if (!c.risk.empty()) v.push_back(c.risk);
    }
    return v;
}

PipelineConfig load_config(const fs::path& path, const Overrides& ov)
{
    if (!fs::exists(path)) throw InputError("missing input file: " + path.string());
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    PipelineConfig c;
    c.source = path;
    const fs::path base = path.parent_path();
    const std::string where = path.string();
    try {
        if (const char* env = std::getenv("EVSYN_SEED"); env && *env) {
            try {
                c.seed = std::stoull(env);
            } catch (const std::exception&) {
                throw InputError("EVSYN_SEED is not an unsigned integer: '" + std::string(env) + "'");
            }
        } else if (j.contains("seed")) {
            c.seed = j.at("seed").get<std::uint64_t>();
        } else {
            throw InputError(where + ": an explicit seed is required");
        }
        if (j.contains("chain")) {
            const auto& ch = j.at("chain");
            c.chain.iterations = ch.value("iterations", c.chain.iterations);
            c.chain.burn_in = ch.value("burn_in", c.chain.burn_in);
            c.chain.n_chains = ch.value("chains", 2);
            c.chain.thinning = ch.value("thinning", 1);
        } else {
            c.chain.n_chains = 2;
        }
        for (const auto& cj : j.at("curves")) {
            CurveInput ci;
            ci.name = get_str(cj, "name", where + ": curve");
            ci.km = resolve(base, get_str(cj, "km", where + ": curve " + ci.name));
            if (cj.contains("risk")) ci.risk = resolve(base, get_str(cj, "risk", where + ": curve " + ci.name));
            if (cj.contains("events")) ci.total_events = cj.at("events").get<int>();
            c.curves.push_back(std::move(ci));
        }
        for (const auto& sj : j.at("studies")) {
            StudyInput s;
            s.study = get_str(sj, "study", where + ": study");
            const std::string w = where + ": study " + s.study;
            s.treatment = get_str(sj, "treatment", w);
            s.comparator = get_str(sj, "comparator", w);
            if (sj.contains("n")) s.n = get_num(sj, "n", w);
            for (Outcome o : {Outcome::os, Outcome::pfs}) {
                const std::string key = synthesis::to_string(o);
                s.outcomes[o] = sj.contains(key) ? outcome_from_json(sj.at(key), w + " " + key) : OutcomeInput{};
            }
            c.studies.push_back(std::move(s));
        }
        const auto& mj = j.at("meta");
        c.meta_model = mj.value("model", "fixed");
        if (c.meta_model != "fixed" && c.meta_model != "random")
            throw InputError(where + ": meta.model must be fixed or random");
        c.meta_treatment = get_str(mj, "treatment", where + ": meta");
        c.meta_comparator = get_str(mj, "comparator", where + ": meta");
        if (mj.contains("tau_prior")) c.re_priors.tau = scale_prior(mj.at("tau_prior"), where + ": meta.tau_prior");

        const auto& bj = j.at("brma");
        c.predict_study = get_str(bj.at("predict"), "study", where + ": brma.predict");
        c.predict_outcome = synthesis::parse_outcome(get_str(bj.at("predict"), "outcome", where + ": brma.predict"));
        if (bj.contains("tau_prior")) c.brma.tau_prior = scale_prior(bj.at("tau_prior"), where + ": brma.tau_prior");
        if (bj.contains("variance_model")) {
            const std::string vm = bj.at("variance_model");
            if (vm == "population") c.brma.variance_model = synthesis::VarianceModel::population;
            else if (vm == "log_variance") c.brma.variance_model = synthesis::VarianceModel::log_variance;
            else throw InputError(where + ": brma.variance_model must be population or log_variance");
        }
        c.brma.within_correlation = bj.value("within_correlation", true);
        c.brma.between_correlation = bj.value("between_correlation", true);

        if (j.contains("indirect"))
            for (const auto& ij : j.at("indirect"))
                c.indirect.push_back({get_str(ij, "name", where + ": indirect"), get_str(ij, "first", where + ": indirect"),
                                      get_str(ij, "second", where + ": indirect")});
        for (auto it = j.at("models").begin(); it != j.at("models").end(); ++it) c.models.push_back({it.key(), it.value()});
        if (c.models.empty()) throw InputError(where + ": at least one model is required");

        const auto& ej = j.at("econ");
        c.thresholds = econ::threshold_grid(ej.value("thresholds", std::string("0:100000:500")));
        if (ej.contains("report_thresholds")) c.report_thresholds = ej.at("report_thresholds").get<std::vector<double>>();
        c.plot_model = ej.value("plot_model", c.models.back().name);
        c.plane_treatment = get_str(ej.at("plane"), "treatment", where + ": econ.plane");
        c.plane_comparator = get_str(ej.at("plane"), "comparator", where + ": econ.plane");
        c.plane_threshold = ej.at("plane").value("threshold", c.plane_threshold);
        c.draws = j.value("draws", c.draws);
        c.workers = j.value("workers", c.workers);
        if (j.contains("out")) c.out = resolve(base, j.at("out").get<std::string>());
    } catch (const json::exception& e) {
        throw InputError(where + ": " + e.what());
    }

    if (ov.seed) c.seed = *ov.seed;
    if (ov.iterations) c.chain.iterations = *ov.iterations;
    if (ov.burn_in) c.chain.burn_in = *ov.burn_in;
    if (ov.chains) c.chain.n_chains = *ov.chains;
    if (ov.draws) c.draws = *ov.draws;
    if (ov.workers) c.workers = *ov.workers;
    if (ov.out) c.out = *ov.out;
    c.chain.validate();
    if (c.draws < 1) throw InputError("draws must be at least 1");
    if (c.workers < 1) throw InputError("workers must be at least 1");

    bool found = false;
    for (const auto& m : c.models) found = found || m.name == c.plot_model;
    if (!found) throw InputError(where + ": econ.plot_model '" + c.plot_model + "' is not a model");
    for (const auto& p : c.inputs())
        if (!fs::exists(p)) throw InputError("missing input file: " + p.string());
    return c;
}

// Run

namespace {

class Writer {
public:
    explicit Writer(fs::path dir) : dir_(std::move(dir)) {}

    fs::path write(const std::string& name, const std::string& text)
    {
        const fs::path p = dir_ / (name + ".partial");
        io::write_text(p, text);
        pending_.push_back(name);
        return dir_ / name;
    }

    std::vector<fs::path> commit()
    {
        std::vector<fs::path> out;
        for (const auto& n : pending_) {
            fs::rename(dir_ / (n + ".partial"), dir_ / n);
            out.push_back(dir_ / n);
        }
        pending_.clear();
        return out;
    }

    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::vector<std::string> pending_;
};

template <class F>
auto stage(const std::string& name, std::ostream* log, F&& f)
{
    if (log) *log << "[" << name << "]\n";
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError("stage " + name + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError("stage " + name + ": " + e.what());
    } catch (const json::exception& e) {
        throw InputError("stage " + name + ": " + e.what());
    } catch (const fs::filesystem_error& e) {
        throw InputError("stage " + name + ": " + e.what());
    }
}

std::string studies_csv(const std::vector<StudyOutcome>& rows)
{
    std::ostringstream ss;
    io::write_studies(ss, rows);
    return ss.str();
}

/// Reorients a row to treatment vs comparator; empty when it is another contrast.
std::optional<StudyOutcome> oriented(const StudyOutcome& r, const std::string& t, const std::string& c)
{
    if (r.treatment == t && r.comparator == c) return r;
    if (r.treatment == c && r.comparator == t) {
        StudyOutcome f = r;
        std::swap(f.treatment, f.comparator);
        if (f.log_hr) f.log_hr = -*f.log_hr;
        return f;
    }
    return std::nullopt;
}

json contrast_json(const Contrast& c)
{
    json j = io::to_json(c.estimate());
    j["treatment"] = c.treatment;
    j["comparator"] = c.comparator;
    return j;
}

json intervention_json(const econ::InterventionSummary& s, const std::vector<markov::PsaSample>& samples)
{
    double drug = 0, fu_std = 0, fu_pd = 0, term = 0, t_std = 0, t_pd = 0;
    long n = 0;
    for (const auto& x : samples) {
        if (x.intervention != s.label) continue;
        drug += x.costs.drug;
        fu_std += x.costs.follow_up_std;
        fu_pd += x.costs.follow_up_pd;
        term += x.costs.terminal;
        t_std += x.time_std;
        t_pd += x.time_pd;
        ++n;
    }
    const double k = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    return {{"label", s.label},
            {"cost", io::to_json(s.cost)},
            {"qaly", io::to_json(s.qaly)},
            {"mean_costs",
             {{"drug", drug * k}, {"follow_up_std", fu_std * k}, {"follow_up_pd", fu_pd * k}, {"terminal", term * k}}},
            {"mean_months", {{"stable", t_std * k}, {"progressed", t_pd * k}, {"alive", (t_std + t_pd) * k}}}};
}

} // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream* log)
{
    PipelineResult result;
    fs::create_directories(cfg.out);
    Writer out(cfg.out);
    auto warn = [&](const std::string& w) {
        result.warnings.push_back(w);
        if (log) *log << "warning: " << w << '\n';
    };

    // reconstruct
    std::map<std::string, std::vector<survival::IpdRecord>> ipd;
    stage("reconstruct", log, [&] {
        std::ostringstream all;
        std::vector<survival::IpdRecord> combined;
        for (const auto& c : cfg.curves) {
            const auto curve = io::read_km(c.km, c.risk);
            survival::ReconstructOptions opt;
            opt.arm = c.name;
            opt.total_events = c.total_events;
            if (curve.risk_table.empty()) throw InputError("curve " + c.name + ": a numbers-at-risk table is required");
            ipd[c.name] = survival::reconstruct_ipd(curve, opt);
            combined.insert(combined.end(), ipd[c.name].begin(), ipd[c.name].end());
        }
        io::write_ipd(all, combined);
        out.write("reconstructed_ipd.csv", all.str());
        return 0;
    });

    // cox
    std::vector<StudyOutcome> rows;
    std::map<std::string, Contrast> estimates;
    stage("cox", log, [&] {
        auto arm_of = [&](const std::string& name) -> const std::vector<survival::IpdRecord>& {
            const auto it = ipd.find(name);
            if (it == ipd.end()) throw InputError("unknown curve '" + name + "'");
            return it->second;
        };
        for (const auto& s : cfg.studies) {
            for (const auto& [o, in] : s.outcomes) {
                StudyOutcome r;
                r.study = s.study;
                r.treatment = s.treatment;
                r.comparator = s.comparator;
                r.outcome = o;
                r.n = s.n;
                if (in.kind == OutcomeInput::curves) {
                    std::vector<survival::IpdRecord> data;
                    for (auto rec : arm_of(in.treatment_curve)) {
                        rec.arm = s.treatment;
                        data.push_back(rec);
                    }
                    for (auto rec : arm_of(in.comparator_curve)) {
                        rec.arm = s.comparator;
                        data.push_back(rec);
                    }
                    const auto fit = survival::cox_fit(data, s.comparator);
                    if (!fit.converged) throw NumericalError("Cox fit for " + s.study + " did not converge");
                    r.log_hr = fit.log_hr;
                    r.se = fit.se;
                } else if (in.kind == OutcomeInput::reported) {
                    r.log_hr = in.log_hr;
                    r.se = in.se;
                }
                synthesis::validate(r);
                if (r.complete()) estimates["study:" + s.study + "/" + synthesis::to_string(o)] = Contrast::from(r);
                rows.push_back(std::move(r));
            }
        }
        for (Outcome o : {Outcome::os, Outcome::pfs}) {
            std::vector<StudyOutcome> part;
            for (const auto& r : rows)
                if (r.outcome == o) part.push_back(r);
            out.write(o == Outcome::os ? "hr_os.csv" : "hr_pfs.csv", studies_csv(part));
        }
        return 0;
    });

    // meta
    json meta_json = json::object();
    stage("meta", log, [&] {
        for (Outcome o : {Outcome::os, Outcome::pfs}) {
            std::vector<StudyOutcome> part;
            for (const auto& r : rows)
                if (r.outcome == o && r.complete())
                    if (auto x = oriented(r, cfg.meta_treatment, cfg.meta_comparator)) part.push_back(*x);
            if (part.empty()) {
                warn("meta " + synthesis::to_string(o) + ": no " + cfg.meta_treatment + " vs " + cfg.meta_comparator
                     + " studies");
                continue;
            }
            HrEstimate pooled;
            json extra = json::object();
            if (cfg.meta_model == "fixed") {
                pooled = synthesis::fixed_effect_ma(part);
            } else {
                auto chain = cfg.chain;
                chain.seed = cfg.seed + 1;
                const auto re = synthesis::random_effects_ma(part, cfg.re_priors, chain);
                pooled = re.pooled;
                for (const auto& w : re.warnings) warn("meta " + synthesis::to_string(o) + ": " + w);
                extra["tau"] = io::to_json(re.tau);
            }
            const std::string name = "meta:" + synthesis::to_string(o);
            estimates[name] = Contrast::from(cfg.meta_treatment, cfg.meta_comparator, pooled);
            json j = contrast_json(estimates[name]);
            j["hr"] = pooled.hr;
            j["lower"] = pooled.lower;
            j["upper"] = pooled.upper;
            j["studies"] = part.size();
            j["model"] = cfg.meta_model;
            j.update(extra);
            meta_json[synthesis::to_string(o)] = j;
        }
        return 0;
    });

    // brma
    std::optional<synthesis::PredictedEffect> predicted;
    stage("brma", log, [&] {
        auto bc = cfg.brma;
        bc.chain = cfg.chain;
        bc.chain.seed = cfg.seed;
        const auto post = synthesis::brma_fit(rows, bc);
        for (const auto& w : post.warnings) warn("brma: " + w);
        const auto& p = post.prediction(cfg.predict_study, cfg.predict_outcome);
        predicted = p;
        const std::string name = "brma:" + p.study + "/" + synthesis::to_string(p.outcome);
        estimates[name] = Contrast::from(p.as_study_outcome());

        json j;
        j["study"] = p.study;
        j["treatment"] = p.treatment;
        j["comparator"] = p.comparator;
        j["outcome"] = synthesis::to_string(p.outcome);
        j["predicted"] = io::to_json(p.effect);
        j["predicted"]["posterior_sd"] = summarize(p.log_hr_draws).sd;
        j["predicted"]["se"] = p.se;
        j["predicted_se"] = io::to_json(p.se_draws);
        j["pooled_os"] = io::to_json(post.pooled_os);
        j["pooled_pfs"] = io::to_json(post.pooled_pfs);
        json params = json::object();
        for (const auto& [k, v] : post.summaries) params[k] = io::to_json(v);
        j["parameters"] = params;
        if (post.diagnostics) {
            json d = json::object();
            for (const auto& pd : post.diagnostics->parameters)
                d[pd.name] = {{"rhat", pd.rhat ? json(*pd.rhat) : json(nullptr)}, {"ess", pd.ess}};
            j["diagnostics"] = d;
            j["converged"] = post.diagnostics->converged;
        }
        j["constraint_rejections"] = post.constraint_rejections;
        j["chain"] = {{"iterations", bc.chain.iterations},
                      {"burn_in", bc.chain.burn_in},
                      {"chains", bc.chain.n_chains},
                      {"seed", bc.chain.seed}};
        j["warnings"] = post.warnings;
        out.write("brma_predicted.json", j.dump(2) + "\n");
        return 0;
    });

    // indirect
    json indirect_json = json::object();
    stage("indirect", log, [&] {
        auto get = [&](const std::string& n) -> const Contrast& {
            const auto it = estimates.find(n);
            if (it == estimates.end()) throw InputError("unknown estimate '" + n + "'");
            return it->second;
        };
        for (const auto& in : cfg.indirect) {
            const auto c = synthesis::indirect_via_common(get(in.first), get(in.second));
            estimates["indirect:" + in.name] = c;
            json j = contrast_json(c);
            j["from"] = {in.first, in.second};
            indirect_json[in.name] = j;
        }
        return 0;
    });

    // markov
    io::Lookups lookups;
    lookups.estimate = [&](const std::string& n, bool invert) -> Uncertain {
        const auto it = estimates.find(n);
        if (it == estimates.end()) throw InputError("unknown estimate '" + n + "'");
        double m = it->second.log_hr, sd = it->second.se;
        if (predicted && n == "brma:" + predicted->study + "/" + synthesis::to_string(predicted->outcome)) {
            const auto s = summarize(predicted->log_hr_draws);
            m = s.mean;
            sd = s.sd;
        }
        return Distribution{Normal{invert ? -m : m, sd}};
    };
    json weibull_json = json::object();
    lookups.weibull = [&](const std::string& n) -> markov::WeibullAft {
        const auto it = ipd.find(n);
        if (it == ipd.end()) throw InputError("Weibull fit: unknown curve '" + n + "'");
        const auto fit = survival::weibull_fit(it->second);
        weibull_json[n] = {{"beta", fit.intercept},
                           {"alpha", fit.scale},
                           {"cov", {{fit.covariance.a, fit.covariance.b}, {fit.covariance.b, fit.covariance.c}}},
                           {"lambda", fit.lambda()},
                           {"gamma", fit.gamma()}};
        return {fit.intercept, fit.scale, fit.covariance};
    };

    std::map<std::string, markov::PsaResult> psa;
    std::map<std::string, markov::ModelSpec> specs;
    for (const auto& m : cfg.models) {
        stage("markov " + m.name, log, [&] {
            specs[m.name] = io::model_from_json(m.spec, lookups);
            auto res = markov::run_psa(specs[m.name], cfg.draws, cfg.seed + 2, cfg.workers);
            for (const auto& w : res.warnings) warn("markov " + m.name + ": " + w);
            std::ostringstream ss;
            io::write_psa(ss, res.samples);
            out.write("psa_" + m.name + ".csv", ss.str());
            psa[m.name] = std::move(res);
            return 0;
        });
    }

    // econ
    json models_json = json::object();
    stage("econ", log, [&] {
        for (const auto& m : cfg.models) {
            const auto& samples = psa.at(m.name).samples;
            const auto res = econ::analyse(samples, cfg.thresholds);
            const auto curve = econ::ceac(samples, cfg.thresholds);
            std::ostringstream cs;
            io::write_ceac(cs, curve);
            out.write("ceac_" + m.name + ".csv", cs.str());
            const auto plane = econ::ce_plane(samples, cfg.plane_treatment, cfg.plane_comparator);
            std::ostringstream ps;
            io::write_plane(ps, plane);
            out.write("plane_" + m.name + ".csv", ps.str());
            if (m.name == cfg.plot_model) {
                out.write("ceac.svg", econ::ceac_svg(curve, "CEAC (" + m.name + ")"));
                out.write("plane.svg", econ::plane_svg(plane,
                                                       cfg.plane_treatment + " vs " + cfg.plane_comparator + " ("
                                                           + m.name + ")",
                                                       cfg.plane_threshold));
            }

            json mj;
            mj["variant"] = markov::to_string(specs.at(m.name).variant);
            json iv = json::array();
            for (const auto& s : res.interventions) iv.push_back(intervention_json(s, samples));
            mj["interventions"] = iv;
            json ic = json::array();
            for (const auto& [pair, r] : res.icers)
                ic.push_back({{"treatment", pair.first},
                              {"comparator", pair.second},
                              {"d_cost", r.d_cost},
                              {"d_qaly", r.d_qaly},
                              {"icer", r.ratio ? json(*r.ratio) : json(nullptr)},
                              {"quadrant", econ::to_string(r.quadrant)}});
            mj["icers"] = ic;
            json th = json::array();
            for (double t : cfg.report_thresholds) {
                const auto it = std::find_if(res.thresholds.begin(), res.thresholds.end(),
                                             [t](const auto& x) { return std::abs(x.threshold - t) < 1e-9; });
                if (it == res.thresholds.end()) {
                    warn("econ: report threshold " + io::format_number(t) + " is not on the grid");
                    continue;
                }
                json row = {{"threshold", t}, {"best_mean_net_benefit", res.interventions[it->best_mean].label}};
                for (std::size_t k = 0; k < res.interventions.size(); ++k)
                    row["interventions"][res.interventions[k].label] = {
                        {"net_benefit", io::to_json(it->net_benefit[k])}, {"probability", it->probability[k]}};
                th.push_back(row);
            }
            mj["thresholds"] = th;
            mj["draws"] = cfg.draws;
            models_json[m.name] = mj;
        }
        return 0;
    });

    json summary;
    summary["version"] = version();
    summary["seed"] = cfg.seed;
    summary["meta"] = meta_json;
    summary["brma_predicted"] = {{"study", predicted->study},
                                 {"outcome", synthesis::to_string(predicted->outcome)},
                                 {"treatment", predicted->treatment},
                                 {"comparator", predicted->comparator},
                                 {"hr", predicted->effect.hr},
                                 {"lower", predicted->effect.lower},
                                 {"upper", predicted->effect.upper},
                                 {"log_hr", predicted->effect.log_hr},
                                 {"posterior_sd", summarize(predicted->log_hr_draws).sd},
                                 {"se", predicted->se}};
    summary["indirect"] = indirect_json;
    summary["weibull_fits"] = weibull_json;
    summary["models"] = models_json;
    summary["warnings"] = result.warnings;
    out.write("summary.json", summary.dump(2) + "\n");

    json manifest;
    manifest["version"] = version();
    manifest["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "."
                                           + std::to_string(EIGEN_MINOR_VERSION)},
                             {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "."
                                                   + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "."
                                                   + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                             {"openssl", OPENSSL_VERSION_TEXT}};
    manifest["seeds"] = {{"base", cfg.seed}, {"brma", cfg.seed}, {"meta", cfg.seed + 1}, {"psa", cfg.seed + 2}};
    manifest["settings"] = {{"iterations", cfg.chain.iterations},
                            {"burn_in", cfg.chain.burn_in},
                            {"chains", cfg.chain.n_chains},
                            {"draws", cfg.draws},
                            {"workers", cfg.workers}};
    json inputs = json::array();
    for (const auto& p : cfg.inputs()) inputs.push_back({{"path", p.lexically_normal().string()}, {"sha256", sha256_file(p)}});
    manifest["inputs"] = inputs;
    json outputs = json::array();
    for (const auto& entry : out.commit()) {
        outputs.push_back({{"file", entry.filename().string()}, {"sha256", sha256_file(entry)}});
        result.outputs.push_back(entry);
    }
    manifest["outputs"] = outputs;
    io::write_text(out.dir() / "manifest.json", manifest.dump(2) + "\n");
    result.outputs.push_back(out.dir() / "manifest.json");
    result.summary = std::move(summary);
    return result;
}

} // namespace evsyn::pipeline
