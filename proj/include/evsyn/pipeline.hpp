#pragma once

#include "evsyn/io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace evsyn::pipeline {

/// Hex SHA-256 of a byte string or a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Command-line overrides; empty fields keep the config's values.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    std::optional<int> burn_in;
    std::optional<int> chains;
    std::optional<long> draws;
    std::optional<int> workers;
    std::optional<std::filesystem::path> out;
};

struct CurveInput {
    std::string name;  // "study/outcome/arm"
    std::filesystem::path km;
    std::filesystem::path risk;
    std::optional<int> total_events;
};

/// How one study supplies one outcome.
struct OutcomeInput {
    enum Kind { curves, reported, missing } kind = missing;
    std::string treatment_curve, comparator_curve;  // curves
    std::optional<double> log_hr, se;               // reported
};

struct StudyInput {
    std::string study;
    std::string treatment;
    std::string comparator;
    std::optional<double> n;
    std::map<synthesis::Outcome, OutcomeInput> outcomes;
};

struct IndirectInput {
    std::string name;
    std::string first;   // estimate names
    std::string second;
};

struct ModelInput {
    std::string name;  // output suffix, e.g. "2state"
    io::json spec;     // resolved after the synthesis stages
};

/// Parsed pipeline configuration; relative paths are resolved against the config's directory.
struct PipelineConfig {
    std::filesystem::path source;
    std::uint64_t seed = 1;
    mcmc::ChainConfig chain;
    std::vector<CurveInput> curves;
    std::vector<StudyInput> studies;
    std::string meta_model = "fixed";
    std::string meta_treatment, meta_comparator;
    synthesis::BrmaConfig brma;
    std::string predict_study;
    synthesis::Outcome predict_outcome = synthesis::Outcome::pfs;
    synthesis::RePriors re_priors;
    std::vector<IndirectInput> indirect;
    std::vector<ModelInput> models;
    std::string plot_model;  // model whose CEAC and plane are drawn
    std::string plane_treatment, plane_comparator;
    double plane_threshold = 30000.0;
    std::vector<double> thresholds;
    std::vector<double> report_thresholds{20000.0, 30000.0};
    long draws = 50000;
    int workers = 1;
    std::filesystem::path out = "out";

    /// Every file the run reads, config first.
    std::vector<std::filesystem::path> inputs() const;
};

/// Throws InputError on a malformed file or a missing input path.
PipelineConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

struct PipelineResult {
    std::vector<std::filesystem::path> outputs;
    std::vector<std::string> warnings;
    io::json summary;
};

/**
 * reconstruct -> cox -> meta -> brma -> indirect -> markov -> econ. Files are
 * written with a ".partial" suffix and renamed once every stage succeeds; a
 * failing stage leaves them in place and rethrows with the stage name.
 */
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log = nullptr);

std::string version();

} // namespace evsyn::pipeline
