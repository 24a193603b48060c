#include "evsyn/mcmc.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <thread>

namespace evsyn::mcmc {

Expr Expr::constant(double c)
{
    return Expr{{}, [c](Values) { return c; }};
}

Expr Expr::param(ParamId id)
{
    return Expr{{id}, [id](Values v) { return v[id]; }};
}

LinearForm LinearForm::constant(double c)
{
    LinearForm f;
    f.offset = Expr::constant(c);
    return f;
}

LinearForm LinearForm::param(ParamId id, double coef)
{
    LinearForm f;
    f.add(id, coef);
    return f;
}

LinearForm& LinearForm::add(ParamId id, Expr coef)
{
    terms.emplace_back(id, std::move(coef));
    return *this;
}

LinearForm& LinearForm::add(ParamId id, double coef) { return add(id, Expr::constant(coef)); }

double LinearForm::operator()(Values v) const
{
    double s = offset(v);
    for (const auto& [id, coef] : terms) s += coef(v) * v[id];
    return s;
}

std::vector<ParamId> LinearForm::deps() const
{
    std::vector<ParamId> out = offset.deps;
    for (const auto& [id, coef] : terms) {
        out.push_back(id);
        out.insert(out.end(), coef.deps.begin(), coef.deps.end());
    }
    return out;
}

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

bool has(const std::vector<ParamId>& v, ParamId id) { return std::find(v.begin(), v.end(), id) != v.end(); }

std::vector<ParamId> term_deps(const NormalTerm& t)
{
    auto d = t.value.deps();
    const auto m = t.mean.deps();
    d.insert(d.end(), m.begin(), m.end());
    d.insert(d.end(), t.sd.deps.begin(), t.sd.deps.end());
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    return d;
}

double coefficient(const LinearForm& f, ParamId id, Values v)
{
    double a = 0.0;
    for (const auto& [pid, coef] : f.terms)
        if (pid == id) a += coef(v);
    return a;
}

bool linear_in(const LinearForm& f, ParamId id)
{
    if (has(f.offset.deps, id)) return false;
    for (const auto& [pid, coef] : f.terms)
        if (has(coef.deps, id)) return false;
    return true;
}

double normal_term_logpdf(const NormalTerm& t, Values v)
{
    const double sd = t.sd(v);
    if (!(sd > 0.0) || !std::isfinite(sd)) return neg_inf;
    const double r = (t.value(v) - t.mean(v)) / sd;
    return -std::log(sd) - 0.5 * r * r;
}

double initial_value(const Distribution& prior)
{
    return std::visit(
        [](const auto& d) -> double {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, Normal>) return d.mean;
            else if constexpr (std::is_same_v<T, HalfNormal>) return d.sd * std::sqrt(2.0 / M_PI);
            else if constexpr (std::is_same_v<T, Uniform>) return 0.5 * (d.lo + d.hi);
            else return evsyn::mean(Distribution{d});
        },
        prior);
}

// Maps between a parameter and its unconstrained proposal scale.
struct Transform {
    Support support;
    double lo, hi;

    double to_free(double x) const
    {
        switch (support) {
        case Support::positive: return std::log(x);
        case Support::interval: {
            const double p = (x - lo) / (hi - lo);
            return std::log(p) - std::log1p(-p);
        }
        default: return x;
        }
    }
    double from_free(double z) const
    {
        switch (support) {
        case Support::positive: return std::exp(z);
        case Support::interval: return lo + (hi - lo) / (1.0 + std::exp(-z));
        default: return z;
        }
    }
    double log_jacobian(double z) const
    {
        switch (support) {
        case Support::positive: return z;
        case Support::interval: {
            // log of (hi - lo) * s(z) * (1 - s(z)) without overflow
            const double a = -std::abs(z);
            return std::log(hi - lo) + a - 2.0 * std::log1p(std::exp(a));
        }
        default: return 0.0;
        }
    }
};

struct Plan {
    UpdateKind kind = UpdateKind::metropolis;
    std::vector<int> normals;
    std::vector<int> customs;
    Transform transform{Support::real, 0.0, 0.0};
};

std::vector<Plan> make_plans(const ModelGraph& model)
{
    const auto& params = model.parameters();
    std::vector<Plan> plans(params.size());
    for (std::size_t k = 0; k < model.normal_terms().size(); ++k)
        for (ParamId id : term_deps(model.normal_terms()[k])) plans[id].normals.push_back(static_cast<int>(k));
    for (std::size_t k = 0; k < model.custom_terms().size(); ++k) {
        auto deps = model.custom_terms()[k].deps;
        std::sort(deps.begin(), deps.end());
        deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
        for (ParamId id : deps) plans[id].customs.push_back(static_cast<int>(k));
    }
    for (std::size_t id = 0; id < params.size(); ++id) {
        const auto& p = params[id];
        auto& plan = plans[id];
        plan.transform = Transform{p.support, p.lo, p.hi};
        if (!p.prior && plan.normals.empty() && plan.customs.empty())
            throw InputError("model: parameter '" + p.name + "' has no prior and appears in no term");
        bool conjugate = p.support == Support::real && plan.customs.empty()
                         && (!p.prior || std::holds_alternative<Normal>(*p.prior));
        for (int k : plan.normals) {
            if (!conjugate) break;
            const auto& t = model.normal_terms()[k];
            const ParamId pid = static_cast<ParamId>(id);
            conjugate = !has(t.sd.deps, pid) && linear_in(t.value, pid) && linear_in(t.mean, pid);
        }
        plan.kind = conjugate ? UpdateKind::gibbs : UpdateKind::metropolis;
    }
    return plans;
}

class Sampler {
public:
    Sampler(const ModelGraph& model, const std::vector<Plan>& plans, const ChainConfig& config, int chain)
        : model_(model), plans_(plans), config_(config), rs_(config.seed, static_cast<std::uint64_t>(chain))
    {
        const auto& params = model.parameters();
        theta_.resize(params.size());
        for (std::size_t id = 0; id < params.size(); ++id) theta_[id] = params[id].init;
        if (chain < static_cast<int>(config.init.size())) {
            for (const auto& [name, value] : config.init[chain]) {
                const auto id = model.find(name);
                if (!id) throw InputError("chain init: unknown parameter '" + name + "'");
                theta_[*id] = value;
            }
        }
        for (std::size_t id = 0; id < params.size(); ++id) {
            const auto& p = params[id];
            const bool inside = p.support == Support::real || (p.support == Support::positive && theta_[id] > 0.0)
                                || (p.support == Support::interval && theta_[id] > p.lo && theta_[id] < p.hi);
            if (!inside || !std::isfinite(theta_[id]))
                throw InitializationError("chain " + std::to_string(chain) + ": initial value of '" + p.name
                                          + "' is outside its support");
        }
        const double lp = full_log_posterior();
        if (!std::isfinite(lp))
            throw InitializationError("chain " + std::to_string(chain)
                                      + ": log posterior is not finite at the initial values");
        step_.assign(params.size(), 1.0);
    }

    Chain run()
    {
        const auto& params = model_.parameters();
        const std::size_t np = params.size();
        const auto& det = model_.deterministics();
        Chain out;
        out.draws.resize(config_.retained(), static_cast<Eigen::Index>(np + det.size()));
        out.step_trace.resize(config_.iterations, static_cast<Eigen::Index>(np));
        std::vector<long> accepted(np, 0), batch_accepted(np, 0);
        constexpr int batch = 50;
        int batch_index = 0;
        int row = 0;
        for (int it = 0; it < config_.iterations; ++it) {
            for (std::size_t id = 0; id < np; ++id) {
                if (plans_[id].kind == UpdateKind::gibbs) {
                    gibbs(static_cast<ParamId>(id));
                } else if (metropolis(static_cast<ParamId>(id), out.rejected_invalid)) {
                    ++batch_accepted[id];
                    if (it >= config_.burn_in) ++accepted[id];
                }
            }
            if (it < config_.burn_in && (it + 1) % batch == 0) {
                ++batch_index;
                const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch_index)));
                for (std::size_t id = 0; id < np; ++id) {
                    if (plans_[id].kind != UpdateKind::metropolis) continue;
                    const double rate = static_cast<double>(batch_accepted[id]) / batch;
                    step_[id] *= std::exp(rate > target_acceptance ? delta : -delta);
                    batch_accepted[id] = 0;
                }
            }
            for (std::size_t id = 0; id < np; ++id) out.step_trace(it, static_cast<Eigen::Index>(id)) = step_[id];
            if (it >= config_.burn_in && (it - config_.burn_in) % config_.thinning == 0 && row < out.draws.rows()) {
                for (std::size_t id = 0; id < np; ++id) out.draws(row, static_cast<Eigen::Index>(id)) = theta_[id];
                for (std::size_t k = 0; k < det.size(); ++k)
                    out.draws(row, static_cast<Eigen::Index>(np + k)) = det[k].second(theta_);
                ++row;
            }
        }
        const int kept = config_.iterations - config_.burn_in;
        out.acceptance.resize(np);
        for (std::size_t id = 0; id < np; ++id)
            out.acceptance[id] =
                plans_[id].kind == UpdateKind::gibbs ? 1.0 : static_cast<double>(accepted[id]) / kept;
        return out;
    }

private:
    static constexpr double target_acceptance = 0.44;

    double local_log_posterior(ParamId id) const
    {
        const auto& p = model_.parameters()[id];
        double lp = p.prior ? log_density(*p.prior, theta_[id]) : 0.0;
        for (int k : plans_[id].normals) lp += normal_term_logpdf(model_.normal_terms()[k], theta_);
        for (int k : plans_[id].customs) lp += model_.custom_terms()[k].log_density(theta_);
        return std::isnan(lp) ? neg_inf : lp;
    }

    double full_log_posterior() const
    {
        double lp = 0.0;
        for (const auto& p : model_.parameters())
            if (p.prior) lp += log_density(*p.prior, theta_[model_.find(p.name).value()]);
        for (const auto& t : model_.normal_terms()) lp += normal_term_logpdf(t, theta_);
        for (const auto& t : model_.custom_terms()) lp += t.log_density(theta_);
        return lp;
    }

    void gibbs(ParamId id)
    {
        const auto& p = model_.parameters()[id];
        double precision = 0.0;
        double weighted = 0.0;
        if (p.prior) {
            const auto& n = std::get<Normal>(*p.prior);
            precision = 1.0 / (n.sd * n.sd);
            weighted = n.mean * precision;
        }
        for (int k : plans_[id].normals) {
            const auto& t = model_.normal_terms()[k];
            const double a = coefficient(t.value, id, theta_) - coefficient(t.mean, id, theta_);
            if (a == 0.0) continue;
            const double sd = t.sd(theta_);
            const double b = t.value(theta_) - t.mean(theta_) - a * theta_[id];
            precision += a * a / (sd * sd);
            weighted -= a * b / (sd * sd);
        }
        if (!(precision > 0.0) || !std::isfinite(precision))
            throw NumericalError("mcmc: full conditional of '" + p.name + "' is improper");
        std::normal_distribution<double> z(0.0, 1.0);
        theta_[id] = weighted / precision + z(rs_) / std::sqrt(precision);
    }

    bool metropolis(ParamId id, long& invalid)
    {
        const auto& tr = plans_[id].transform;
        const double old_value = theta_[id];
        const double z_old = tr.to_free(old_value);
        const double lp_old = local_log_posterior(id) + tr.log_jacobian(z_old);
        std::normal_distribution<double> z(0.0, 1.0);
        const double z_new = z_old + step_[id] * z(rs_);
        const double proposal = tr.from_free(z_new);
        const double u = rs_.uniform01();
        // proposals rounding onto the boundary are outside the open support
        const bool inside = std::isfinite(proposal)
                            && (tr.support == Support::real || (tr.support == Support::positive && proposal > 0.0)
                                || (tr.support == Support::interval && proposal > tr.lo && proposal < tr.hi));
        if (!inside) {
            ++invalid;
            return false;
        }
        theta_[id] = proposal;
        const double lp_new = local_log_posterior(id);
        if (lp_new == neg_inf) {
            ++invalid;
            theta_[id] = old_value;
            return false;
        }
        if (std::log(u) < lp_new + tr.log_jacobian(z_new) - lp_old) return true;
        theta_[id] = old_value;
        return false;
    }

    const ModelGraph& model_;
    const std::vector<Plan>& plans_;
    const ChainConfig& config_;
    RandomStream rs_;
    std::vector<double> theta_;
    std::vector<double> step_;
};

double variance_of(const std::vector<double>& x, double m)
{
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

double mean_of(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); }

} // namespace

ParamId ModelGraph::push(Parameter p)
{
    if (find(p.name)) throw InputError("model: duplicate parameter name '" + p.name + "'");
    params_.push_back(std::move(p));
    return static_cast<ParamId>(params_.size() - 1);
}

ParamId ModelGraph::add_parameter(const std::string& name, const Distribution& prior)
{
    evsyn::validate(prior);
    Parameter p;
    p.name = name;
    p.prior = prior;
    p.init = initial_value(prior);
    if (std::holds_alternative<HalfNormal>(prior) || std::holds_alternative<Gamma>(prior)) {
        p.support = Support::positive;
    } else if (const auto* u = std::get_if<Uniform>(&prior)) {
        p.support = Support::interval;
        p.lo = u->lo;
        p.hi = u->hi;
    } else if (std::holds_alternative<Beta>(prior)) {
        p.support = Support::interval;
        p.lo = 0.0;
        p.hi = 1.0;
    }
    return push(std::move(p));
}

ParamId ModelGraph::add_latent(const std::string& name, double init, Support support, double lo, double hi)
{
    if (support == Support::interval && !(hi > lo)) throw InputError("model: latent '" + name + "' has an empty interval");
    Parameter p;
    p.name = name;
    p.support = support;
    p.lo = lo;
    p.hi = hi;
    p.init = init;
    return push(std::move(p));
}

void ModelGraph::add_normal(NormalTerm term) { normals_.push_back(std::move(term)); }
void ModelGraph::add_custom(CustomTerm term) { customs_.push_back(std::move(term)); }

void ModelGraph::add_deterministic(const std::string& name, Expr expr)
{
    for (const auto& [n, e] : deterministic_)
        if (n == name) throw InputError("model: duplicate deterministic node '" + name + "'");
    if (find(name)) throw InputError("model: deterministic node '" + name + "' shadows a parameter");
    deterministic_.emplace_back(name, std::move(expr));
}

std::optional<ParamId> ModelGraph::find(const std::string& name) const
{
    for (std::size_t k = 0; k < params_.size(); ++k)
        if (params_[k].name == name) return static_cast<ParamId>(k);
    return std::nullopt;
}

std::vector<std::string> ModelGraph::column_names() const
{
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p.name);
    for (const auto& [n, e] : deterministic_) out.push_back(n);
    return out;
}

void ModelGraph::validate() const
{
    if (params_.empty()) throw InputError("model: no parameters");
    const auto n = static_cast<ParamId>(params_.size());
    auto check = [n](const std::vector<ParamId>& deps, const std::string& where) {
        for (ParamId id : deps)
            if (id < 0 || id >= n) throw InputError("model: " + where + " references an undeclared parameter");
    };
    for (const auto& t : normals_) check(term_deps(t), "normal term");
    for (const auto& t : customs_) {
        check(t.deps, "custom term");
        if (!t.log_density) throw InputError("model: custom term without a density");
    }
    for (const auto& [name, e] : deterministic_) check(e.deps, "deterministic node '" + name + "'");
    make_plans(*this);
}

void ChainConfig::validate() const
{
    if (iterations < 1) throw InputError("chain config: iterations must be positive");
    if (burn_in < 0 || burn_in >= iterations) throw InputError("chain config: burn-in must be in [0, iterations)");
    if (thinning < 1) throw InputError("chain config: thinning must be at least 1");
    if (n_chains < 1) throw InputError("chain config: need at least one chain");
}

std::size_t ChainOutput::column(const std::string& name) const
{
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw InputError("chain output: no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> ChainOutput::pooled(const std::string& name) const
{
    const auto c = static_cast<Eigen::Index>(column(name));
    std::vector<double> out;
    for (const auto& ch : chains)
        for (Eigen::Index r = 0; r < ch.draws.rows(); ++r) out.push_back(ch.draws(r, c));
    return out;
}

DrawSummary ChainOutput::summary(const std::string& name) const { return summarize(pooled(name)); }

long ChainOutput::rejected_invalid() const
{
    long n = 0;
    for (const auto& c : chains) n += c.rejected_invalid;
    return n;
}

ChainOutput run_chain(const ModelGraph& model, const ChainConfig& config)
{
    config.validate();
    model.validate();
    const auto plans = make_plans(model);

    ChainOutput out;
    out.columns = model.column_names();
    for (const auto& p : plans) out.update_kind.push_back(p.kind);
    out.chains.resize(config.n_chains);

    std::vector<std::exception_ptr> errors(config.n_chains);
    auto work = [&](int c) {
        try {
            Sampler s(model, plans, config, c);
            out.chains[c] = s.run();
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (config.n_chains == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        for (int c = 0; c < config.n_chains; ++c) threads.emplace_back(work, c);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const auto& params = model.parameters();
    for (int c = 0; c < config.n_chains; ++c) {
        for (std::size_t id = 0; id < params.size(); ++id) {
            if (plans[id].kind != UpdateKind::metropolis) continue;
            const double a = out.chains[c].acceptance[id];
            if (a < 0.05 || a > 0.95)
                out.warnings.push_back("chain " + std::to_string(c) + ": acceptance rate of '" + params[id].name
                                       + "' is " + std::to_string(a) + " after adaptation");
        }
    }
    return out;
}

std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains)
{
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t h = c.size() / 2;
        if (h < 2) throw InsufficientDataError("split_rhat: chains too short");
        halves.emplace_back(c.begin(), c.begin() + h);
        halves.emplace_back(c.end() - h, c.end());
    }
    const double n = static_cast<double>(halves.front().size());
    std::vector<double> means;
    double w = 0.0;
    for (const auto& h : halves) {
        means.push_back(mean_of(h));
        w += variance_of(h, means.back());
    }
    w /= halves.size();
    const double b_over_n = variance_of(means, mean_of(means));
    if (w == 0.0 && b_over_n == 0.0) return std::nullopt;
    if (w == 0.0) return std::numeric_limits<double>::infinity();
    const double var_plus = (n - 1.0) / n * w + b_over_n;
    return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains)
{
    const std::size_t m = chains.size();
    const std::size_t n = chains.front().size();
    for (const auto& c : chains)
        if (c.size() != n) throw InputError("effective_sample_size: chains differ in length");
    if (n < 4) throw InsufficientDataError("effective_sample_size: chains too short");

    std::vector<double> means(m), vars(m);
    for (std::size_t c = 0; c < m; ++c) {
        means[c] = mean_of(chains[c]);
        vars[c] = variance_of(chains[c], means[c]);
    }
    const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
    const double b_over_n = m > 1 ? variance_of(means, mean_of(means)) : 0.0;
    const double var_plus = (n - 1.0) / n * w + b_over_n;
    if (var_plus == 0.0) return static_cast<double>(m * n);

    auto autocov = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t + lag < n; ++t) s += (chains[c][t] - means[c]) * (chains[c][t + lag] - means[c]);
            acc += s / n;
        }
        return acc / m;
    };
    auto rho = [&](std::size_t lag) { return 1.0 - (w - autocov(lag)) / var_plus; };

    // Geyer: sum adjacent pairs while positive, enforcing monotone decrease.
    double sum = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        sum += pair;
    }
    const double tau = -1.0 + 2.0 * sum;
    return static_cast<double>(m * n) / std::max(tau, 1.0 / std::log10(static_cast<double>(m * n)));
}

Diagnostics diagnose(const ChainOutput& output)
{
    if (output.chains.empty()) throw InsufficientDataError("diagnose: no chains");
    const auto rows = output.chains.front().draws.rows();
    if (rows < 100) throw InsufficientDataError("diagnose: need at least 100 retained draws per chain");
    Diagnostics d;
    if (output.chains.size() < 2) d.notes.push_back("split R-hat needs two or more chains; not computed");
    for (std::size_t c = 0; c < output.columns.size(); ++c) {
        std::vector<std::vector<double>> per_chain;
        for (const auto& ch : output.chains) {
            const auto col = ch.draws.col(static_cast<Eigen::Index>(c));
            per_chain.emplace_back(col.data(), col.data() + col.size());
        }
        ParameterDiagnostic p;
        p.name = output.columns[c];
        if (output.chains.size() >= 2) {
            p.rhat = split_rhat(per_chain);
            p.flagged = p.rhat && *p.rhat > 1.05;
            if (!p.rhat) d.notes.push_back("'" + p.name + "' is constant; R-hat not applicable");
        }
        p.ess = effective_sample_size(per_chain);
        if (p.flagged) d.converged = false;
        d.parameters.push_back(std::move(p));
    }
    return d;
}

} // namespace evsyn::mcmc
