#include "evsyn/econ.hpp"

#include "evsyn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace evsyn::econ {

std::string to_string(Quadrant q)
{
    switch (q) {
    case Quadrant::more_costly_more_effective: return "more costly, more effective";
    case Quadrant::dominated: return "dominated";
    case Quadrant::dominant: return "dominant";
    case Quadrant::less_costly_less_effective: return "less costly, less effective";
    default: return "undefined";
    }
}

Icer icer(double d_cost, double d_qaly)
{
    Icer r{d_cost, d_qaly, std::nullopt, Quadrant::undefined};
    if (std::abs(d_qaly) < 1e-12) return r;
    r.ratio = d_cost / d_qaly;
    if (d_qaly > 0.0)
        r.quadrant = d_cost > 0.0 ? Quadrant::more_costly_more_effective : Quadrant::dominant;
    else
        r.quadrant = d_cost >= 0.0 ? Quadrant::dominated : Quadrant::less_costly_less_effective;
    return r;
}

Icer icer(std::span<const PsaSample> samples, const std::string& a, const std::string& b)
{
    const auto t = SampleTable::from(samples);
    const auto ia = t.column(a), ib = t.column(b);
    return icer(t.cost.col(ia).mean() - t.cost.col(ib).mean(), t.qaly.col(ia).mean() - t.qaly.col(ib).mean());
}

double net_benefit(double qaly, double cost, double threshold) { return threshold * qaly - cost; }

SampleTable SampleTable::from(std::span<const PsaSample> samples)
{
    if (samples.empty()) throw InputError("no PSA samples");
    SampleTable t;
    std::map<long, std::size_t> row;
    for (const auto& s : samples) {
        if (std::find(t.interventions.begin(), t.interventions.end(), s.intervention) == t.interventions.end())
            t.interventions.push_back(s.intervention);
        if (row.emplace(s.draw, t.draws.size()).second) t.draws.push_back(s.draw);
    }
    const auto n = static_cast<Eigen::Index>(t.draws.size());
    const auto k = static_cast<Eigen::Index>(t.interventions.size());
    t.cost = Eigen::MatrixXd::Constant(n, k, std::nan(""));
    t.qaly = t.cost;
    for (const auto& s : samples) {
        const auto r = static_cast<Eigen::Index>(row[s.draw]);
        const auto c = static_cast<Eigen::Index>(t.column(s.intervention));
        if (!std::isnan(t.cost(r, c)))
            throw InputError("draw " + std::to_string(s.draw) + " has two samples for " + s.intervention);
        t.cost(r, c) = s.cost;
        t.qaly(r, c) = s.qaly;
    }
    if (t.cost.hasNaN()) throw InputError("PSA samples: some draws lack an intervention");
    return t;
}

std::size_t SampleTable::column(const std::string& label) const
{
    const auto it = std::find(interventions.begin(), interventions.end(), label);
    if (it == interventions.end()) throw InputError("no samples for intervention '" + label + "'");
    return static_cast<std::size_t>(it - interventions.begin());
}

DrawSummary net_benefit(const SampleTable& table, const std::string& label, double threshold)
{
    const auto c = static_cast<Eigen::Index>(table.column(label));
    const Eigen::VectorXd nb = threshold * table.qaly.col(c) - table.cost.col(c);
    return summarize(std::span<const double>(nb.data(), static_cast<std::size_t>(nb.size())));
}

Ceac ceac(const SampleTable& table, std::span<const double> thresholds)
{
    if (thresholds.empty()) throw InputError("ceac: empty threshold grid");
    if (table.interventions.size() < 2) throw InputError("ceac: at least two interventions are required");
    Ceac out;
    out.thresholds.assign(thresholds.begin(), thresholds.end());
    out.interventions = table.interventions;
    const auto n = table.cost.rows(), k = table.cost.cols();
    out.probability = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(thresholds.size()), k);
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
        const double wtp = thresholds[j];
        if (!(wtp >= 0.0)) throw InputError("ceac: thresholds must be non-negative");
        for (Eigen::Index r = 0; r < n; ++r) {
            const Eigen::RowVectorXd nb = wtp * table.qaly.row(r) - table.cost.row(r);
            const double best = nb.maxCoeff();
            const double ties = static_cast<double>((nb.array() == best).count());
            for (Eigen::Index c = 0; c < k; ++c)
                if (nb(c) == best) out.probability(static_cast<Eigen::Index>(j), c) += 1.0 / ties;
        }
    }
    out.probability /= static_cast<double>(n);
    return out;
}

Ceac ceac(std::span<const PsaSample> samples, std::span<const double> thresholds)
{
    return ceac(SampleTable::from(samples), thresholds);
}

std::vector<double> threshold_grid(double lo, double hi, double step)
{
    if (!(lo >= 0.0) || !(hi >= lo) || !(step > 0.0)) throw InputError("threshold grid: need 0 <= lo <= hi and step > 0");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out;
    for (long i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

std::vector<double> threshold_grid(const std::string& range)
{
    double v[3];
    char tail = 0;
    if (std::sscanf(range.c_str(), "%lf:%lf:%lf%c", &v[0], &v[1], &v[2], &tail) != 3)
        throw InputError("threshold grid '" + range + "': expected lo:hi:step");
    return threshold_grid(v[0], v[1], v[2]);
}

std::vector<PlanePoint> ce_plane(std::span<const PsaSample> samples, const std::string& a, const std::string& b)
{
    const auto t = SampleTable::from(samples);
    const auto ia = static_cast<Eigen::Index>(t.column(a)), ib = static_cast<Eigen::Index>(t.column(b));
    std::vector<PlanePoint> out;
    for (Eigen::Index r = 0; r < t.cost.rows(); ++r)
        out.push_back({t.draws[static_cast<std::size_t>(r)], t.qaly(r, ia) - t.qaly(r, ib), t.cost(r, ia) - t.cost(r, ib)});
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.draw < y.draw; });
    return out;
}

CeResult analyse(std::span<const PsaSample> samples, std::span<const double> thresholds)
{
    const auto t = SampleTable::from(samples);
    CeResult res;
    auto column = [](const Eigen::MatrixXd& m, Eigen::Index c) {
        std::vector<double> v(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
        return v;
    };
    const auto k = static_cast<Eigen::Index>(t.interventions.size());
    for (Eigen::Index c = 0; c < k; ++c)
        res.interventions.push_back({t.interventions[c], summarize(column(t.cost, c)), summarize(column(t.qaly, c))});
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < i; ++j)
            res.icers.push_back({{t.interventions[i], t.interventions[j]},
                                 icer(t.cost.col(i).mean() - t.cost.col(j).mean(),
                                      t.qaly.col(i).mean() - t.qaly.col(j).mean())});
    if (thresholds.empty()) return res;
    const Ceac curve = k >= 2 ? ceac(t, thresholds) : Ceac{};
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
        ThresholdSummary ts;
        ts.threshold = thresholds[j];
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < k; ++c) {
            ts.net_benefit.push_back(net_benefit(t, t.interventions[c], thresholds[j]));
            ts.probability.push_back(k >= 2 ? curve.probability(static_cast<Eigen::Index>(j), c) : 1.0);
            if (ts.net_benefit.back().mean > best) {
                best = ts.net_benefit.back().mean;
                ts.best_mean = static_cast<std::size_t>(c);
            }
        }
        res.thresholds.push_back(std::move(ts));
    }
    return res;
}

namespace {

constexpr double svg_w = 640, svg_h = 420, left = 70, right = 20, top = 40, bottom = 50;
const char* palette[] = {"#1b6ca8", "#d1495b", "#2e8b57", "#edae49", "#6a4c93", "#444444"};

double nice_step(double span)
{
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
        if (raw <= m * mag) return m * mag;
    return 10.0 * mag;
}

std::string fmt(double v)
{
    char buf[32];
    if (std::abs(v) >= 1000.0 || v == std::floor(v))
        std::snprintf(buf, sizeof buf, "%.0f", v);
    else
        std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return left + (x - x0) / (x1 - x0) * (svg_w - left - right); }
    double py(double y) const { return svg_h - bottom - (y - y0) / (y1 - y0) * (svg_h - top - bottom); }
};

void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
          const std::string& ylabel)
{
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << svg_w << "\" height=\"" << svg_h
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        os << "<text x=\"" << svg_w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    const double xs = nice_step(f.x1 - f.x0), ys = nice_step(f.y1 - f.y0);
    for (double x = std::ceil(f.x0 / xs) * xs; x <= f.x1 + 1e-9 * xs; x += xs) {
        os << "<line x1=\"" << f.px(x) << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.px(x) << "\" y2=\""
           << f.py(f.y1) << "\" stroke=\"#e5e5e5\"/>\n";
        os << "<text x=\"" << f.px(x) << "\" y=\"" << f.py(f.y0) + 16 << "\" text-anchor=\"middle\">" << fmt(x)
           << "</text>\n";
    }
    for (double y = std::ceil(f.y0 / ys) * ys; y <= f.y1 + 1e-9 * ys; y += ys) {
        os << "<line x1=\"" << f.px(f.x0) << "\" y1=\"" << f.py(y) << "\" x2=\"" << f.px(f.x1) << "\" y2=\""
           << f.py(y) << "\" stroke=\"#e5e5e5\"/>\n";
        os << "<text x=\"" << f.px(f.x0) - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << fmt(y)
           << "</text>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << svg_w - left - right << "\" height=\""
       << svg_h - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (left + svg_w - right) / 2 << "\" y=\"" << svg_h - 12 << "\" text-anchor=\"middle\">"
       << xlabel << "</text>\n";
    os << "<text transform=\"translate(16," << (top + svg_h - bottom) / 2
       << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

} // namespace

std::string ceac_svg(const Ceac& curve, const std::string& title)
{
    if (curve.thresholds.empty()) throw InputError("ceac_svg: empty curve");
    const double x1 = curve.thresholds.back() > curve.thresholds.front() ? curve.thresholds.back()
                                                                          : curve.thresholds.front() + 1.0;
    const Frame f{curve.thresholds.front(), x1, 0.0, 1.0};
    std::ostringstream os;
    axes(os, f, escape(title), "Willingness to pay per QALY (GBP)", "Probability cost-effective");
    for (std::size_t c = 0; c < curve.interventions.size(); ++c) {
        const char* colour = palette[c % std::size(palette)];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (std::size_t j = 0; j < curve.thresholds.size(); ++j)
            os << (j ? " " : "") << f.px(curve.thresholds[j]) << ","
               << f.py(curve.probability(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)));
        os << "\"/>\n";
        const double ly = top + 14 + 16.0 * static_cast<double>(c);
        os << "<line x1=\"" << svg_w - right - 130 << "\" y1=\"" << ly << "\" x2=\"" << svg_w - right - 110
           << "\" y2=\"" << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << svg_w - right - 104 << "\" y=\"" << ly + 4 << "\">" << escape(curve.interventions[c])
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string plane_svg(std::span<const PlanePoint> points, const std::string& title, double threshold)
{
    if (points.empty()) throw InputError("plane_svg: no points");
    double qx0 = 0, qx1 = 0, cy0 = 0, cy1 = 0;
    for (const auto& p : points) {
        qx0 = std::min(qx0, p.d_qaly);
        qx1 = std::max(qx1, p.d_qaly);
        cy0 = std::min(cy0, p.d_cost);
        cy1 = std::max(cy1, p.d_cost);
    }
    auto pad = [](double& lo, double& hi) {
        const double span = hi - lo > 0 ? hi - lo : 1.0;
        lo -= 0.05 * span;
        hi += 0.05 * span;
    };
    pad(qx0, qx1);
    pad(cy0, cy1);
    const Frame f{qx0, qx1, cy0, cy1};
    std::ostringstream os;
    axes(os, f, escape(title), "Incremental QALY", "Incremental cost (GBP)");
    os << "<line x1=\"" << f.px(qx0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(qx1) << "\" y2=\"" << f.py(0)
       << "\" stroke=\"black\" stroke-width=\"0.6\"/>\n";
    os << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(cy0) << "\" x2=\"" << f.px(0) << "\" y2=\"" << f.py(cy1)
       << "\" stroke=\"black\" stroke-width=\"0.6\"/>\n";
    // thin the cloud to keep the file small
    const std::size_t stride = std::max<std::size_t>(1, points.size() / 5000);
    os << "<g fill=\"" << palette[0] << "\" fill-opacity=\"0.35\">\n";
    for (std::size_t i = 0; i < points.size(); i += stride) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"1.6\"/>\n", f.px(points[i].d_qaly),
                      f.py(points[i].d_cost));
        os << buf;
    }
    os << "</g>\n";
    if (threshold > 0.0) {
        // clip the line cost = threshold * qaly to the frame
        double xa = qx0, xb = qx1;
        xa = std::max(xa, cy0 / threshold);
        xb = std::min(xb, cy1 / threshold);
        if (xa < xb)
            os << "<line x1=\"" << f.px(xa) << "\" y1=\"" << f.py(threshold * xa) << "\" x2=\"" << f.px(xb)
               << "\" y2=\"" << f.py(threshold * xb) << "\" stroke=\"" << palette[1]
               << "\" stroke-dasharray=\"5,3\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace evsyn::econ
