#pragma once

#include "evsyn/econ.hpp"
#include "evsyn/markov.hpp"
#include "evsyn/survival.hpp"
#include "evsyn/synthesis.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace evsyn::io {

using json = nlohmann::json;

/// Shortest decimal form that reads back to the same double.
std::string format_number(double x);

/// Header plus string cells; every row has the header's width.
struct CsvTable {
    std::string source;  // path or label used in error messages
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index, or -1 when optional and absent; throws InputError otherwise.
    int column(const std::string& name, bool required = true) const;
    double number(std::size_t row, int col) const;
};

CsvTable parse_csv(std::istream& in, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// study,treatment,comparator,outcome,log_hr,se[,n]; empty cells are missing.
std::vector<synthesis::StudyOutcome> read_studies(const std::filesystem::path& path);
void write_studies(std::ostream& out, const std::vector<synthesis::StudyOutcome>& rows);

/// time,event,arm
std::vector<survival::IpdRecord> read_ipd(const std::filesystem::path& path);
void write_ipd(std::ostream& out, const std::vector<survival::IpdRecord>& data);

/// time,survival and interval_start,n_at_risk; the risk table may be omitted.
survival::KmCurve read_km(const std::filesystem::path& km_path, const std::filesystem::path& risk_path = {});
void write_km(std::ostream& km_out, std::ostream& risk_out, const survival::KmCurve& curve);

/// draw,intervention,cost,qaly
void write_psa(std::ostream& out, const std::vector<markov::PsaSample>& samples);
std::vector<markov::PsaSample> read_psa(const std::filesystem::path& path);

/// threshold,intervention,probability
void write_ceac(std::ostream& out, const econ::Ceac& curve);
/// draw,d_qaly,d_cost
void write_plane(std::ostream& out, const std::vector<econ::PlanePoint>& points);

// JSON model descriptions

Distribution distribution_from_json(const json& j);
json to_json(const Distribution& d);

/// Resolves {"estimate": name, "invert": bool} to a log-hr distribution.
using EstimateLookup = std::function<Uncertain(const std::string& name, bool invert)>;
/// Resolves {"type": "weibull", "fit": name} to fitted coefficients.
using WeibullLookup = std::function<markov::WeibullAft(const std::string& name)>;

struct Lookups {
    EstimateLookup estimate;
    WeibullLookup weibull;
};

Uncertain uncertain_from_json(const json& j, const Lookups& lookups = {});
markov::TransitionGen transition_from_json(const json& j, const Lookups& lookups = {});
markov::ModelSpec model_from_json(const json& j, const Lookups& lookups = {});

/// Parses and validates a model file.
markov::ModelSpec read_model(const std::filesystem::path& path);

json to_json(const HrEstimate& est);
json to_json(const DrawSummary& s);

} // namespace evsyn::io
