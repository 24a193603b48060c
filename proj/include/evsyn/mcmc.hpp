#pragma once

#include "evsyn/random.hpp"
#include "evsyn/summary.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace evsyn::mcmc {

using ParamId = int;
using Values = std::span<const double>;

/// Scalar function of the current parameter vector with its dependencies declared.
struct Expr {
    std::vector<ParamId> deps;
    std::function<double(Values)> fn;

    double operator()(Values v) const { return fn(v); }
    static Expr constant(double c);
    static Expr param(ParamId id);
};

/// offset + sum of coef_k * theta_k; coefficients must not depend on their own parameter.
struct LinearForm {
    Expr offset = Expr::constant(0.0);
    std::vector<std::pair<ParamId, Expr>> terms;

    static LinearForm constant(double c);
    static LinearForm param(ParamId id, double coef = 1.0);
    LinearForm& add(ParamId id, Expr coef);
    LinearForm& add(ParamId id, double coef);
    double operator()(Values v) const;
    std::vector<ParamId> deps() const;
};

/// value ~ Normal(mean, sd). Parameters entering only linearly through such
/// terms (and a normal prior) get Gibbs updates.
struct NormalTerm {
    LinearForm value;
    LinearForm mean;
    Expr sd;
};

/// Arbitrary log-density contribution; return -inf to reject.
struct CustomTerm {
    std::vector<ParamId> deps;
    std::function<double(Values)> log_density;
};

enum class Support { real, positive, interval };

struct Parameter {
    std::string name;
    std::optional<Distribution> prior;  // empty: density comes from the model terms only
    Support support = Support::real;
    double lo = 0.0;
    double hi = 0.0;
    double init = 0.0;
};

class ModelGraph {
public:
    /// Parameter with a proper prior; support and initial value follow from the prior.
    ParamId add_parameter(const std::string& name, const Distribution& prior);
    /// Hierarchical parameter whose distribution is given entirely by model terms.
    ParamId add_latent(const std::string& name, double init, Support support = Support::real, double lo = 0.0,
                       double hi = 0.0);
    void add_normal(NormalTerm term);
    void add_custom(CustomTerm term);
    void add_deterministic(const std::string& name, Expr expr);

    /// Throws InputError on undeclared references or duplicate names.
    void validate() const;

    const std::vector<Parameter>& parameters() const { return params_; }
    const std::vector<NormalTerm>& normal_terms() const { return normals_; }
    const std::vector<CustomTerm>& custom_terms() const { return customs_; }
    const std::vector<std::pair<std::string, Expr>>& deterministics() const { return deterministic_; }
    std::optional<ParamId> find(const std::string& name) const;
    /// Names of parameters followed by deterministic nodes, in output column order.
    std::vector<std::string> column_names() const;

private:
    ParamId push(Parameter p);
    std::vector<Parameter> params_;
    std::vector<NormalTerm> normals_;
    std::vector<CustomTerm> customs_;
    std::vector<std::pair<std::string, Expr>> deterministic_;
};

struct ChainConfig {
    int iterations = 30000;
    int burn_in = 15000;
    int thinning = 1;
    std::uint64_t seed = 1;
    int n_chains = 1;
    /// Optional per-chain starting values by parameter name.
    std::vector<std::map<std::string, double>> init;

    void validate() const;
    int retained() const { return (iterations - burn_in) / thinning; }
};

enum class UpdateKind { gibbs, metropolis };

struct Chain {
    Eigen::MatrixXd draws;       // retained iterations x columns
    std::vector<double> acceptance;  // per parameter; 1 for Gibbs updates
    Eigen::MatrixXd step_trace;  // iterations x parameters, proposal scale after each iteration
    long rejected_invalid = 0;   // proposals with zero posterior density
};

struct ChainOutput {
    std::vector<std::string> columns;
    std::vector<UpdateKind> update_kind;  // per parameter
    std::vector<Chain> chains;
    std::vector<std::string> warnings;

    std::size_t column(const std::string& name) const;
    /// Retained draws of one column, chains concatenated in index order.
    std::vector<double> pooled(const std::string& name) const;
    DrawSummary summary(const std::string& name) const;
    long rejected_invalid() const;
};

/**
 * Metropolis-within-Gibbs. Conjugate normal parameters are drawn exactly;
 * the rest use random-walk proposals on an unconstrained scale whose widths
 * adapt toward 44% acceptance in 50-iteration batches during burn-in and
 * are frozen afterwards. Chains run concurrently on streams (seed, chain).
 */
ChainOutput run_chain(const ModelGraph& model, const ChainConfig& config);

struct ParameterDiagnostic {
    std::string name;
    std::optional<double> rhat;  // empty when every draw is identical
    double ess = 0.0;
    bool flagged = false;         // rhat above 1.05
};

struct Diagnostics {
    std::vector<ParameterDiagnostic> parameters;
    bool converged = true;
    std::vector<std::string> notes;
};

/// Split R-hat (needs two or more chains) and effective sample size per column.
Diagnostics diagnose(const ChainOutput& output);

/// Split-R-hat of equally long chains; empty when the pooled draws are constant.
std::optional<double> split_rhat(const std::vector<std::vector<double>>& chains);
/// Effective sample size with Geyer's initial monotone sequence, summed over chains.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

} // namespace evsyn::mcmc
