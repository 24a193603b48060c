#pragma once

#include "evsyn/markov.hpp"
#include "evsyn/summary.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evsyn::econ {

using markov::PsaSample;

/// Position of (dQALY, dCost) on the cost-effectiveness plane.
enum class Quadrant {
    more_costly_more_effective,
    dominated,  // more costly, no more effective
    dominant,   // no more costly, more effective
    less_costly_less_effective,
    undefined   // no QALY difference
};

std::string to_string(Quadrant q);

struct Icer {
    double d_cost = 0.0;
    double d_qaly = 0.0;
    std::optional<double> ratio;  // empty when |dQALY| < 1e-12
    Quadrant quadrant = Quadrant::undefined;
};

/// Ratio of mean differences with its quadrant.
Icer icer(double d_cost, double d_qaly);
/// a minus b from the means over draws.
Icer icer(std::span<const PsaSample> samples, const std::string& a, const std::string& b);

/// threshold * QALY - cost.
double net_benefit(double qaly, double cost, double threshold);

/// Samples arranged as draws x interventions.
struct SampleTable {
    std::vector<std::string> interventions;  // in order of first appearance
    std::vector<long> draws;
    Eigen::MatrixXd cost;
    Eigen::MatrixXd qaly;

    /// Throws InputError unless every draw has exactly one sample per intervention.
    static SampleTable from(std::span<const PsaSample> samples);
    std::size_t column(const std::string& label) const;
};

/// Per-draw net benefit of one intervention, summarized.
DrawSummary net_benefit(const SampleTable& table, const std::string& label, double threshold);

struct Ceac {
    std::vector<double> thresholds;
    std::vector<std::string> interventions;
    Eigen::MatrixXd probability;  // thresholds x interventions
};

/// Share of draws where each intervention has the highest net benefit; exact ties are split equally.
Ceac ceac(const SampleTable& table, std::span<const double> thresholds);
Ceac ceac(std::span<const PsaSample> samples, std::span<const double> thresholds);

/// "lo:hi:step", inclusive of both ends.
std::vector<double> threshold_grid(const std::string& range);
std::vector<double> threshold_grid(double lo, double hi, double step);

struct PlanePoint {
    long draw = 0;
    double d_qaly = 0.0;
    double d_cost = 0.0;
};

/// Per-draw (a - b) increments in draw order.
std::vector<PlanePoint> ce_plane(std::span<const PsaSample> samples, const std::string& a, const std::string& b);

struct InterventionSummary {
    std::string label;
    DrawSummary cost;
    DrawSummary qaly;
};

struct ThresholdSummary {
    double threshold = 0.0;
    std::vector<DrawSummary> net_benefit;  // per intervention
    std::vector<double> probability;       // per intervention
    std::size_t best_mean = 0;             // argmax of mean net benefit
};

struct CeResult {
    std::vector<InterventionSummary> interventions;
    std::vector<std::pair<std::pair<std::string, std::string>, Icer>> icers;  // every ordered pair i > j
    std::vector<ThresholdSummary> thresholds;
};

CeResult analyse(std::span<const PsaSample> samples, std::span<const double> thresholds);

/// Static line chart of a CEAC.
std::string ceac_svg(const Ceac& curve, const std::string& title = "");
/// Static scatter of plane points with a willingness-to-pay line when threshold > 0.
std::string plane_svg(std::span<const PlanePoint> points, const std::string& title = "", double threshold = 0.0);

} // namespace evsyn::econ
