#include "evsyn/error.hpp"
#include "evsyn/io.hpp"
#include "evsyn/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace evsyn;
using io::json;

namespace {

struct ChainFlags {
    int iterations = 30000;
    int burn_in = 15000;
    int chains = 2;
};

void add_chain_flags(CLI::App* cmd, ChainFlags& f)
{
    cmd->add_option("--iters", f.iterations, "MCMC iterations per chain")->check(CLI::PositiveNumber);
    cmd->add_option("--burnin", f.burn_in, "Burn-in iterations per chain")->check(CLI::NonNegativeNumber);
    cmd->add_option("--chains", f.chains, "Number of chains")->check(CLI::PositiveNumber);
}

mcmc::ChainConfig chain_config(const ChainFlags& f, std::uint64_t seed)
{
    mcmc::ChainConfig c;
    c.iterations = f.iterations;
    c.burn_in = f.burn_in;
    c.n_chains = f.chains;
    c.seed = seed;
    c.validate();
    return c;
}

std::uint64_t default_seed()
{
    if (const char* env = std::getenv("EVSYN_SEED"); env && *env) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw InputError("EVSYN_SEED is not an unsigned integer: '" + std::string(env) + "'");
        }
    }
    return 1;
}

/// Writes to a file, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") std::cout << text;
    else io::write_text(path, text);
}

Distribution parse_prior(const std::string& text)
{
    try {
        return io::distribution_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw InputError("prior '" + text + "': " + e.what());
    }
}

std::vector<synthesis::StudyOutcome> read_all(const std::vector<std::string>& files)
{
    std::vector<synthesis::StudyOutcome> rows;
    for (const auto& f : files) {
        auto part = io::read_studies(f);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

/// "D+P,M+P,0.76,0.62,0.94": treatment, comparator, HR and its 95% interval.
synthesis::Contrast parse_contrast(const std::string& text)
{
    std::vector<std::string> f;
    std::stringstream ss(text);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw InputError("contrast '" + text + "': expected treatment,comparator,hr,lower,upper");
    double v[3];
    for (int i = 0; i < 3; ++i) {
        try {
            v[i] = std::stod(f[2 + i]);
        } catch (const std::exception&) {
            throw InputError("contrast '" + text + "': '" + f[2 + i] + "' is not a number");
        }
    }
    if (!(v[1] > 0 && v[1] < v[0] && v[0] < v[2])) throw InputError("contrast '" + text + "': need 0 < lower < hr < upper");
    return {f[0], f[1], std::log(v[0]), se_from_ci(v[1], v[2])};
}

std::string contrast_line(const synthesis::Contrast& c)
{
    return c.treatment + " vs " + c.comparator + ": " + format_hr(c.estimate());
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Evidence synthesis and Markov cost-effectiveness models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pipeline::version());

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Patient-level data from a digitized KM curve and risk table");
    std::string km_path, risk_path, arm = "arm", out_path;
    std::optional<int> total_events;
    rec->add_option("--km", km_path, "KM curve CSV (time,survival)")->required();
    rec->add_option("--risk", risk_path, "Numbers-at-risk CSV (interval_start,n_at_risk)")->required();
    rec->add_option("--events", total_events, "Total number of events, when reported");
    rec->add_option("--arm", arm, "Arm label for the output records");
    rec->add_option("--out", out_path, "Output IPD CSV (default stdout)");

    // cox
    auto* cox = app.add_subcommand("cox", "Two-arm Cox model on IPD");
    std::string ipd_path, reference;
    cox->add_option("--ipd", ipd_path, "IPD CSV (time,event,arm)")->required();
    cox->add_option("--reference", reference, "Reference arm")->required();

    // weibull
    auto* wei = app.add_subcommand("weibull", "Weibull AFT fit on IPD");
    std::string wei_arm;
    wei->add_option("--ipd", ipd_path, "IPD CSV (time,event,arm)")->required();
    wei->add_option("--arm", wei_arm, "Only records of this arm");

    // meta
    auto* meta = app.add_subcommand("meta", "Fixed- or random-effects pooling of log hazard ratios");
    std::vector<std::string> data;
    std::string model = "fixed", outcome = "OS", tau_prior;
    std::optional<std::string> treatment, comparator;
    std::uint64_t seed = 0;
    bool seed_given = false;
    ChainFlags chain;
    meta->add_option("--data", data, "Study CSV (study,treatment,comparator,outcome,log_hr,se[,n])")->required();
    meta->add_option("--model", model, "fixed or random")->check(CLI::IsMember({"fixed", "random"}));
    meta->add_option("--outcome", outcome, "OS or PFS");
    meta->add_option("--treatment", treatment, "Treatment of the pooled contrast");
    meta->add_option("--comparator", comparator, "Comparator of the pooled contrast");
    meta->add_option("--tau-prior", tau_prior, "Heterogeneity prior as JSON, e.g. {\"dist\":\"uniform\",\"lo\":0,\"hi\":5}");
    meta->add_option("--seed", seed, "Random seed (default EVSYN_SEED or 1)")->each([&](const std::string&) { seed_given = true; });
    add_chain_flags(meta, chain);

    // brma
    auto* brma = app.add_subcommand("brma", "Bivariate random-effects meta-analysis with prediction");
    std::string predict, json_out;
    brma->add_option("--data", data, "Study CSV(s)")->required();
    brma->add_option("--predict", predict, "study=ID,outcome=OS|PFS")->required();
    brma->add_option("--tau-prior", tau_prior, "Between-study sd prior as JSON");
    brma->add_option("--seed", seed, "Random seed")->each([&](const std::string&) { seed_given = true; });
    brma->add_option("--out", json_out, "Write the posterior summary as JSON");
    add_chain_flags(brma, chain);

    // indirect
    auto* ind = app.add_subcommand("indirect", "Bucher indirect comparison through a common comparator");
    std::string first, second;
    ind->add_option("--first", first, "treatment,comparator,hr,lower,upper")->required();
    ind->add_option("--second", second, "treatment,comparator,hr,lower,upper")->required();

    // nma
    auto* nma = app.add_subcommand("nma", "Contrast-based network meta-analysis");
    bool fixed_nma = false;
    std::string nma_ref;
    nma->add_option("--data", data, "Study CSV(s)")->required();
    nma->add_option("--outcome", outcome, "OS or PFS");
    nma->add_option("--reference", nma_ref, "Reference treatment");
    nma->add_flag("--fixed", fixed_nma, "Fixed-effect network (no heterogeneity)");
    nma->add_option("--tau-prior", tau_prior, "Heterogeneity prior as JSON");
    nma->add_option("--seed", seed, "Random seed")->each([&](const std::string&) { seed_given = true; });
    add_chain_flags(nma, chain);

    // markov
    auto* mk = app.add_subcommand("markov", "Probabilistic Markov cohort model");
    std::string model_path;
    long draws = 50000;
    int workers = 1;
    mk->add_option("--config", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
    mk->add_option("--draws", draws, "Monte-Carlo parameter draws")->check(CLI::PositiveNumber);
    mk->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    mk->add_option("--seed", seed, "Random seed")->each([&](const std::string&) { seed_given = true; });
    mk->add_option("--out", out_path, "PSA CSV (default stdout)");

    // ceac
    auto* ce = app.add_subcommand("ceac", "Acceptability curve from PSA samples");
    std::string psa_path, thresholds = "0:100000:500", svg_path;
    ce->add_option("--psa", psa_path, "PSA CSV (draw,intervention,cost,qaly)")->required();
    ce->add_option("--thresholds", thresholds, "lo:hi:step");
    ce->add_option("--out", out_path, "CEAC CSV (default stdout)");
    ce->add_option("--svg", svg_path, "Also draw the curve");

    // run
    auto* run = app.add_subcommand("run", "Full pipeline from a configuration file");
    std::string config_path;
    pipeline::Overrides ov;
    std::string out_dir;
    run->add_option("--config", config_path, "Pipeline JSON")->required();
    run->add_option("--seed", ov.seed, "Overrides the config and EVSYN_SEED");
    run->add_option("--iters", ov.iterations, "MCMC iterations per chain");
    run->add_option("--burnin", ov.burn_in, "Burn-in iterations");
    run->add_option("--chains", ov.chains, "Number of chains");
    run->add_option("--draws", ov.draws, "PSA draws");
    run->add_option("--workers", ov.workers, "Worker threads");
    run->add_option("--out", out_dir, "Output directory");
    run->alias("pipeline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
    }

    try {
        const std::uint64_t the_seed = seed_given ? seed : default_seed();

        if (*rec) {
            const auto curve = io::read_km(km_path, risk_path);
            survival::ReconstructOptions opt;
            opt.arm = arm;
            opt.total_events = total_events;
            std::ostringstream ss;
            io::write_ipd(ss, survival::reconstruct_ipd(curve, opt));
            emit(out_path, ss.str());
        } else if (*cox) {
            const auto d = io::read_ipd(ipd_path);
            const auto fit = survival::cox_fit(d, reference);
            std::cout << fit.comparison_arm << " vs " << fit.reference_arm << ": "
                      << format_hr(HrEstimate::from_log(fit.log_hr, fit.se)) << "\n"
                      << "log_hr=" << io::format_number(fit.log_hr) << " se=" << io::format_number(fit.se)
                      << " iterations=" << fit.iterations << '\n';
            if (!fit.converged) throw NumericalError("Cox fit did not converge");
        } else if (*wei) {
            auto d = io::read_ipd(ipd_path);
            if (!wei_arm.empty()) d = survival::select_arm(d, wei_arm);
            const auto fit = survival::weibull_fit(d);
            json j = {{"beta", fit.intercept},
                      {"alpha", fit.scale},
                      {"cov", {{fit.covariance.a, fit.covariance.b}, {fit.covariance.b, fit.covariance.c}}},
                      {"lambda", fit.lambda()},
                      {"gamma", fit.gamma()},
                      {"log_likelihood", fit.log_likelihood}};
            std::cout << j.dump(2) << '\n';
        } else if (*meta) {
            const auto o = synthesis::parse_outcome(outcome);
            std::map<std::pair<std::string, std::string>, int> counts;
            for (const auto& r : read_all(data))
                if (r.outcome == o && r.complete()) ++counts[{r.treatment, r.comparator}];
            if (counts.empty()) throw InputError("no complete " + outcome + " rows");
            if (treatment.has_value() != comparator.has_value())
                throw InputError("--treatment and --comparator go together");
            std::pair<std::string, std::string> want;
            if (treatment) {
                want = {*treatment, *comparator};
            } else {
                auto best = counts.begin();
                for (auto it = counts.begin(); it != counts.end(); ++it)
                    if (it->second > best->second) best = it;
                want = best->first;
            }
            std::vector<synthesis::StudyOutcome> rows;
            for (auto r : read_all(data)) {
                if (r.outcome != o || !r.complete()) continue;
                if (r.treatment == want.second && r.comparator == want.first) {
                    std::swap(r.treatment, r.comparator);
                    r.log_hr = -*r.log_hr;
                }
                if (r.treatment == want.first && r.comparator == want.second) rows.push_back(r);
            }
            if (rows.empty()) throw InputError("no " + want.first + " vs " + want.second + " rows");
            std::cerr << "pooling " << want.first << " vs " << want.second << " " << outcome << " over " << rows.size()
                      << " studies\n";
            if (model == "fixed") {
                std::cout << format_hr(synthesis::fixed_effect_ma(rows)) << '\n';
            } else {
                synthesis::RePriors pri;
                if (!tau_prior.empty()) pri.tau = parse_prior(tau_prior);
                const auto re = synthesis::random_effects_ma(rows, pri, chain_config(chain, the_seed));
                std::cout << format_hr(re.pooled) << '\n';
                std::cerr << "tau mean " << re.tau.mean << " (" << re.tau.lower << ", " << re.tau.upper << ")\n";
                for (const auto& w : re.warnings) std::cerr << "warning: " << w << '\n';
            }
        } else if (*brma) {
            std::string study, out_name;
            std::stringstream ss(predict);
            for (std::string kv; std::getline(ss, kv, ',');) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw InputError("--predict: expected key=value, got '" + kv + "'");
                const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
                if (key == "study") study = val;
                else if (key == "outcome") out_name = val;
                else throw InputError("--predict: unknown key '" + key + "'");
            }
            if (study.empty() || out_name.empty()) throw InputError("--predict needs study= and outcome=");
            synthesis::BrmaConfig bc;
            bc.chain = chain_config(chain, the_seed);
            if (!tau_prior.empty()) bc.tau_prior = parse_prior(tau_prior);
            const auto post = synthesis::brma_fit(read_all(data), bc);
            const auto& p = post.prediction(study, synthesis::parse_outcome(out_name));
            std::cout << p.study << " " << synthesis::to_string(p.outcome) << " " << p.treatment << " vs "
                      << p.comparator << ": " << format_hr(p.effect) << '\n';
            std::cout << "predicted se " << io::format_number(p.se) << '\n';
            for (const auto& w : post.warnings) std::cerr << "warning: " << w << '\n';
            if (!json_out.empty()) {
                json j;
                j["predicted"] = io::to_json(p.effect);
                j["predicted"]["se"] = p.se;
                j["pooled_os"] = io::to_json(post.pooled_os);
                j["pooled_pfs"] = io::to_json(post.pooled_pfs);
                for (const auto& [k, v] : post.summaries) j["parameters"][k] = io::to_json(v);
                io::write_text(json_out, j.dump(2) + "\n");
            }
        } else if (*ind) {
            const auto c = synthesis::indirect_via_common(parse_contrast(first), parse_contrast(second));
            std::cout << contrast_line(c) << '\n';
        } else if (*nma) {
            const auto o = synthesis::parse_outcome(outcome);
            std::vector<synthesis::StudyOutcome> rows;
            for (const auto& r : read_all(data))
                if (r.outcome == o && r.complete()) rows.push_back(r);
            synthesis::NmaConfig nc;
            nc.random_effects = !fixed_nma;
            if (!nma_ref.empty()) nc.reference = nma_ref;
            if (!tau_prior.empty()) nc.tau_prior = parse_prior(tau_prior);
            nc.chain = chain_config(chain, the_seed);
            const auto res = synthesis::nma_fit(rows, nc);
            for (const auto& c : res.contrasts)
                std::cout << c.contrast.treatment << " vs " << c.contrast.comparator << ": " << format_hr(c.hr) << '\n';
            if (res.tau) std::cout << "tau " << res.tau->mean << " (" << res.tau->lower << ", " << res.tau->upper << ")\n";
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
        } else if (*mk) {
            const auto spec = io::read_model(model_path);
            const auto res = markov::run_psa(spec, draws, the_seed, workers);
            std::ostringstream ss;
            io::write_psa(ss, res.samples);
            emit(out_path, ss.str());
            for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
            const auto summary = econ::analyse(res.samples, std::vector<double>{20000.0, 30000.0});
            for (const auto& s : summary.interventions)
                std::cerr << s.label << ": cost " << s.cost.mean << " qaly " << s.qaly.mean << '\n';
        } else if (*ce) {
            const auto samples = io::read_psa(psa_path);
            const auto grid = econ::threshold_grid(thresholds);
            const auto curve = econ::ceac(samples, grid);
            std::ostringstream ss;
            io::write_ceac(ss, curve);
            emit(out_path, ss.str());
            if (!svg_path.empty()) io::write_text(svg_path, econ::ceac_svg(curve, "CEAC"));
        } else {
            if (config_path.empty()) throw InputError("run: --config is required");
            if (!out_dir.empty()) ov.out = fs::path(out_dir);
            const auto cfg = pipeline::load_config(config_path, ov);
            const auto res = pipeline::run_pipeline(cfg, &std::cerr);
            for (const auto& p : res.outputs) std::cout << p.string() << '\n';
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::numerical);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::data);
    }
    return 0;
}
