#include "evsyn/io.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace evsyn::io {

namespace fs = std::filesystem;

std::string format_number(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line, const std::string& where)
{
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell.push_back(c);
        }
    }
    if (quoted) throw InputError(where + ": unterminated quote");
    out.push_back(trim(cell));
    return out;
}

std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    return q + "\"";
}

std::optional<double> optional_number(const CsvTable& t, std::size_t row, int col)
{
    if (col < 0 || t.rows[row][col].empty()) return std::nullopt;
    return t.number(row, col);
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("write failed: " + path.string());
}

} // namespace

int CsvTable::column(const std::string& name, bool required) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    if (required) throw InputError(source + ": missing column '" + name + "'");
    return -1;
}

double CsvTable::number(std::size_t row, int col) const
{
    const std::string& s = rows.at(row).at(col);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw InputError(source + ": line " + std::to_string(row + 2) + ", column '" + header[col]
                         + "': not a number: '" + s + "'");
    return v;
}

CsvTable parse_csv(std::istream& in, const std::string& source)
{
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto cells = split_line(line, source + ": line " + std::to_string(line_no));
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw InputError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size())
                             + " fields, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw InputError(source + ": empty file, header row required");
    return t;
}

CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return parse_csv(in, path.string());
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) { write_file(path, text); }

std::vector<synthesis::StudyOutcome> read_studies(const fs::path& path)
{
    const auto t = read_csv(path);
    const int cs = t.column("study"), ct = t.column("treatment"), cc = t.column("comparator"),
              co = t.column("outcome"), cl = t.column("log_hr"), ce = t.column("se"), cn = t.column("n", false);
    std::vector<synthesis::StudyOutcome> rows;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        synthesis::StudyOutcome r;
        r.study = t.rows[i][cs];
        r.treatment = t.rows[i][ct];
        r.comparator = t.rows[i][cc];
        try {
            r.outcome = synthesis::parse_outcome(t.rows[i][co]);
            r.log_hr = optional_number(t, i, cl);
            r.se = optional_number(t, i, ce);
            r.n = optional_number(t, i, cn);
            synthesis::validate(r);
        } catch (const InputError& e) {
            throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": " + e.what());
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_studies(std::ostream& out, const std::vector<synthesis::StudyOutcome>& rows)
{
    const bool with_n = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.n.has_value(); });
    out << "study,treatment,comparator,outcome,log_hr,se" << (with_n ? ",n" : "") << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    for (const auto& r : rows) {
        out << quote(r.study) << ',' << quote(r.treatment) << ',' << quote(r.comparator) << ','
            << synthesis::to_string(r.outcome) << ',' << opt(r.log_hr) << ',' << opt(r.se);
        if (with_n) out << ',' << opt(r.n);
        out << '\n';
    }
}

std::vector<survival::IpdRecord> read_ipd(const fs::path& path)
{
    const auto t = read_csv(path);
    const int ct = t.column("time"), ce = t.column("event"), ca = t.column("arm");
    std::vector<survival::IpdRecord> data;
    data.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double time = t.number(i, ct);
        const double ev = t.number(i, ce);
        if (!(time >= 0.0) || !std::isfinite(time))
            throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": time must be non-negative");
        if (ev != 0.0 && ev != 1.0)
            throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": event must be 0 or 1");
        data.push_back({time, ev == 1.0, t.rows[i][ca]});
    }
    if (data.empty()) throw InputError(path.string() + ": no records");
    return data;
}

void write_ipd(std::ostream& out, const std::vector<survival::IpdRecord>& data)
{
    out << "time,event,arm\n";
    for (const auto& r : data) out << format_number(r.time) << ',' << (r.event ? 1 : 0) << ',' << quote(r.arm) << '\n';
}

survival::KmCurve read_km(const fs::path& km_path, const fs::path& risk_path)
{
    survival::KmCurve curve;
    const auto t = read_csv(km_path);
    const int ct = t.column("time"), cs = t.column("survival");
    for (std::size_t i = 0; i < t.rows.size(); ++i) curve.steps.push_back({t.number(i, ct), t.number(i, cs)});
    if (curve.steps.empty() || curve.steps.front().time > 0.0) curve.steps.insert(curve.steps.begin(), {0.0, 1.0});
    if (!risk_path.empty()) {
        const auto r = read_csv(risk_path);
        const int cb = r.column("interval_start"), cn = r.column("n_at_risk");
        for (std::size_t i = 0; i < r.rows.size(); ++i) {
            const double n = r.number(i, cn);
            if (n != std::floor(n))
                throw InputError(risk_path.string() + ": line " + std::to_string(i + 2) + ": n_at_risk must be an integer");
            curve.risk_table.push_back({r.number(i, cb), static_cast<int>(n)});
        }
    }
    try {
        survival::validate(curve);
    } catch (const InputError& e) {
        throw InputError(km_path.string() + ": " + e.what());
    }
    return curve;
}

void write_km(std::ostream& km_out, std::ostream& risk_out, const survival::KmCurve& curve)
{
    km_out << "time,survival\n";
    for (const auto& s : curve.steps) km_out << format_number(s.time) << ',' << format_number(s.survival) << '\n';
    risk_out << "interval_start,n_at_risk\n";
    for (const auto& r : curve.risk_table) risk_out << format_number(r.start) << ',' << r.n_at_risk << '\n';
}

void write_psa(std::ostream& out, const std::vector<markov::PsaSample>& samples)
{
    out << "draw,intervention,cost,qaly\n";
    for (const auto& s : samples)
        out << s.draw << ',' << quote(s.intervention) << ',' << format_number(s.cost) << ',' << format_number(s.qaly)
            << '\n';
}

std::vector<markov::PsaSample> read_psa(const fs::path& path)
{
    const auto t = read_csv(path);
    const int cd = t.column("draw"), ci = t.column("intervention"), cc = t.column("cost"), cq = t.column("qaly");
    std::vector<markov::PsaSample> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        markov::PsaSample s;
        const double d = t.number(i, cd);
        if (d != std::floor(d) || d < 0)
            throw InputError(path.string() + ": line " + std::to_string(i + 2) + ": draw must be a non-negative integer");
        s.draw = static_cast<long>(d);
        s.intervention = t.rows[i][ci];
        s.cost = t.number(i, cc);
        s.qaly = t.number(i, cq);
        out.push_back(std::move(s));
    }
    return out;
}

void write_ceac(std::ostream& out, const econ::Ceac& curve)
{
    out << "threshold,intervention,probability\n";
    for (std::size_t j = 0; j < curve.thresholds.size(); ++j)
        for (std::size_t k = 0; k < curve.interventions.size(); ++k)
            out << format_number(curve.thresholds[j]) << ',' << quote(curve.interventions[k]) << ','
                << format_number(curve.probability(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)))
                << '\n';
}

void write_plane(std::ostream& out, const std::vector<econ::PlanePoint>& points)
{
    out << "draw,d_qaly,d_cost\n";
    for (const auto& p : points) out << p.draw << ',' << format_number(p.d_qaly) << ',' << format_number(p.d_cost) << '\n';
}

// JSON

namespace {

double num(const json& j, const char* key, const std::string& where)
{
    if (!j.contains(key)) throw InputError(where + ": missing '" + key + "'");
    if (!j.at(key).is_number()) throw InputError(where + ": '" + key + "' must be a number");
    return j.at(key).get<double>();
}

double num_or(const json& j, const char* key, double fallback, const std::string& where)
{
    return j.contains(key) ? num(j, key, where) : fallback;
}

std::string str(const json& j, const char* key, const std::string& where)
{
    if (!j.contains(key) || !j.at(key).is_string()) throw InputError(where + ": missing string '" + key + "'");
    return j.at(key).get<std::string>();
}

} // namespace

Distribution distribution_from_json(const json& j)
{
    const std::string where = "distribution " + j.dump();
    if (!j.is_object()) throw InputError(where + ": expected an object");
    const std::string kind = str(j, "dist", where);
    Distribution d;
    if (kind == "normal") {
        d = j.contains("variance") ? Normal::from_variance(num(j, "mean", where), num(j, "variance", where))
                                   : Normal{num(j, "mean", where), num(j, "sd", where)};
    } else if (kind == "half_normal") {
        d = j.contains("variance") ? HalfNormal::from_variance(num(j, "variance", where)) : HalfNormal{num(j, "sd", where)};
    } else if (kind == "uniform") {
        d = Uniform{num(j, "lo", where), num(j, "hi", where)};
    } else if (kind == "beta") {
        d = Beta{num(j, "a", where), num(j, "b", where)};
    } else if (kind == "gamma") {
        const double shape = num(j, "shape", where);
        if (j.contains("rate") == j.contains("scale")) throw InputError(where + ": give exactly one of rate or scale");
        d = Gamma{shape, j.contains("rate") ? num(j, "rate", where) : 1.0 / num(j, "scale", where)};
    } else {
        throw InputError(where + ": unknown dist '" + kind + "'");
    }
    validate(d);
    return d;
}

json to_json(const Distribution& d)
{
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Normal>) return {{"dist", "normal"}, {"mean", x.mean}, {"sd", x.sd}};
            else if constexpr (std::is_same_v<T, HalfNormal>) return {{"dist", "half_normal"}, {"sd", x.sd}};
            else if constexpr (std::is_same_v<T, Uniform>) return {{"dist", "uniform"}, {"lo", x.lo}, {"hi", x.hi}};
            else if constexpr (std::is_same_v<T, Beta>) return {{"dist", "beta"}, {"a", x.a}, {"b", x.b}};
            else return {{"dist", "gamma"}, {"shape", x.shape}, {"rate", x.rate}};
        },
        d);
}

Uncertain uncertain_from_json(const json& j, const Lookups& lookups)
{
    if (j.is_number()) return j.get<double>();
    if (j.is_object() && j.contains("estimate")) {
        const std::string name = str(j, "estimate", "estimate reference");
        if (!lookups.estimate) throw InputError("estimate reference '" + name + "' cannot be resolved here");
        const bool invert = j.value("invert", false);
        return lookups.estimate(name, invert);
    }
    return distribution_from_json(j);
}

markov::TransitionGen transition_from_json(const json& j, const Lookups& lookups)
{
    const std::string where = "transition " + j.dump();
    const std::string type = str(j, "type", where);
    if (type == "weibull") {
        if (j.contains("fit")) {
            const std::string name = str(j, "fit", where);
            if (!lookups.weibull) throw InputError("Weibull fit '" + name + "' cannot be resolved here");
            return lookups.weibull(name);
        }
        markov::WeibullAft w;
        w.beta = num(j, "beta", where);
        w.alpha = num(j, "alpha", where);
        if (!(w.alpha > 0.0)) throw InputError(where + ": alpha must be positive");
        if (j.contains("cov")) {
            const auto& c = j.at("cov");
            if (!c.is_array() || c.size() != 2 || c[0].size() != 2 || c[1].size() != 2)
                throw InputError(where + ": cov must be a 2x2 array");
            w.cov = {c[0][0].get<double>(), 0.5 * (c[0][1].get<double>() + c[1][0].get<double>()), c[1][1].get<double>()};
        }
        return w;
    }
    if (type == "scaled") {
        markov::HazardScaled s;
        s.base = str(j, "base", where);
        if (j.contains("log_hr")) s.log_hr = uncertain_from_json(j.at("log_hr"), lookups);
        return s;
    }
    if (type == "exponential") {
        markov::ExponentialFromMean e;
        if (!j.contains("mean")) throw InputError(where + ": missing 'mean'");
        e.mean = uncertain_from_json(j.at("mean"), lookups);
        if (j.contains("minus")) e.minus = uncertain_from_json(j.at("minus"), lookups);
        return e;
    }
    if (type == "fixed") return markov::FixedProb{num(j, "p", where)};
    throw InputError(where + ": unknown type '" + type + "'");
}

markov::ModelSpec model_from_json(const json& j, const Lookups& lookups)
{
    if (!j.is_object()) throw InputError("model: expected an object");
    markov::ModelSpec spec;
    const std::string where = "model";
    if (j.contains("variant")) {
        const auto& v = j.at("variant");
        spec.variant = markov::parse_variant(v.is_number() ? std::to_string(v.get<int>()) : v.get<std::string>());
    }
    spec.cycles = static_cast<int>(num_or(j, "cycles", spec.cycles, where));
    spec.cycle_length = num_or(j, "cycle_length", spec.cycle_length, where);
    spec.cohort_size = num_or(j, "cohort_size", spec.cohort_size, where);
    spec.annual_discount = num_or(j, "annual_discount", spec.annual_discount, where);
    spec.discount_start = static_cast<int>(num_or(j, "discount_start", spec.discount_start, where));
    if (j.contains("utilities")) {
        const auto& u = j.at("utilities");
        if (u.contains("pd")) spec.utilities.pd = uncertain_from_json(u.at("pd"), lookups);
        if (u.contains("surviving")) spec.utilities.surviving = uncertain_from_json(u.at("surviving"), lookups);
        if (u.contains("other_causes")) spec.utilities.other_causes = uncertain_from_json(u.at("other_causes"), lookups);
    }
    if (!j.contains("interventions") || !j.at("interventions").is_array())
        throw InputError("model: 'interventions' must be an array");
    for (const auto& ij : j.at("interventions")) {
        markov::InterventionSpec s;
        s.label = str(ij, "label", "intervention");
        const std::string w = "intervention '" + s.label + "'";
        try {
            if (ij.contains("std_death")) s.std_death = transition_from_json(ij.at("std_death"), lookups);
            if (ij.contains("std_pd")) s.std_pd = transition_from_json(ij.at("std_pd"), lookups);
            if (ij.contains("pd_death")) s.pd_death = transition_from_json(ij.at("pd_death"), lookups);
            s.drug_cost_per_cycle = num_or(ij, "drug_cost_per_cycle", 0.0, w);
            if (ij.contains("cycles_on_drug")) s.cycles_on_drug = uncertain_from_json(ij.at("cycles_on_drug"), lookups);
            if (ij.contains("follow_up_cost")) s.follow_up_cost = uncertain_from_json(ij.at("follow_up_cost"), lookups);
            if (ij.contains("terminal_care_cost"))
                s.terminal_care_cost = uncertain_from_json(ij.at("terminal_care_cost"), lookups);
            if (ij.contains("cost_ratio")) {
                const auto& c = ij.at("cost_ratio");
                s.cost_ratio = markov::CostRatio{str(c, "reference", w + " cost_ratio"),
                                                 distribution_from_json(c.at("numerator")),
                                                 distribution_from_json(c.at("denominator"))};
            }
            s.division_factor = num_or(ij, "division_factor", s.division_factor, w);
        } catch (const json::exception& e) {
            throw InputError(w + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(w + ": " + e.what());
        }
        spec.interventions.push_back(std::move(s));
    }
    spec.validate();
    return spec;
}

markov::ModelSpec read_model(const fs::path& path)
{
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    try {
        return model_from_json(j.contains("model") ? j.at("model") : j);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

json to_json(const HrEstimate& est)
{
    return {{"hr", est.hr}, {"lower", est.lower}, {"upper", est.upper}, {"log_hr", est.log_hr}, {"se", est.se}};
}

json to_json(const DrawSummary& s)
{
    return {{"mean", s.mean}, {"sd", s.sd}, {"lower", s.lower}, {"upper", s.upper}, {"n_draws", s.n_draws}};
}

} // namespace evsyn::io
