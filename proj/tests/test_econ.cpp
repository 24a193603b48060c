#include <doctest.h>

#include "evsyn/econ.hpp"
#include "evsyn/error.hpp"

#include <cmath>

using namespace evsyn;
using namespace evsyn::econ;

namespace {

PsaSample s(long draw, const std::string& label, double cost, double qaly)
{
    PsaSample x;
    x.draw = draw;
    x.intervention = label;
    x.cost = cost;
    x.qaly = qaly;
    return x;
}

std::vector<PsaSample> random_samples(int draws, std::uint64_t seed)
{
    RandomStream rs(seed);
    std::vector<PsaSample> out;
    for (int d = 0; d < draws; ++d) {
        out.push_back(s(d, "P", sample(rs, Normal{11000, 3000}), sample(rs, Normal{0.81, 0.13})));
        out.push_back(s(d, "M+P", sample(rs, Normal{11200, 2500}), sample(rs, Normal{0.81, 0.12})));
        out.push_back(s(d, "D+P", sample(rs, Normal{15800, 3500}), sample(rs, Normal{0.97, 0.15})));
    }
    return out;
}

} // namespace

TEST_CASE("ICER from mean differences")
{
    const auto r = icer(4624.0, 0.154);
    REQUIRE(r.ratio.has_value());
    CHECK(std::lround(*r.ratio) == 30026);
    CHECK(r.quadrant == Quadrant::more_costly_more_effective);
    CHECK(*icer(0.0, 0.2).ratio == 0.0);
    CHECK_FALSE(icer(100.0, 0.0).ratio.has_value());
    CHECK(icer(100.0, 0.0).quadrant == Quadrant::undefined);
    CHECK(icer(-100.0, 0.1).quadrant == Quadrant::dominant);
    CHECK(icer(100.0, -0.1).quadrant == Quadrant::dominated);
    CHECK(icer(-100.0, -0.1).quadrant == Quadrant::less_costly_less_effective);

    const std::vector<PsaSample> v = {s(0, "A", 10, 1), s(0, "B", 4, 0.5), s(1, "A", 20, 2), s(1, "B", 6, 0.5)};
    const auto from_samples = icer(v, "A", "B");
    CHECK(from_samples.d_cost == doctest::Approx(10.0));
    CHECK(from_samples.d_qaly == doctest::Approx(1.0));
    CHECK_THROWS_AS(icer(v, "A", "C"), InputError);
}

TEST_CASE("net benefit")
{
    CHECK(net_benefit(0.8, 1234.0, 0.0) == -1234.0);
    CHECK(std::abs(net_benefit(0.809, 11772.0, 20000.0) - 4417.0) < 20.0);
    const double q = 0.7, c = 5000.0;
    CHECK(net_benefit(q, c, 40000.0) + c == doctest::Approx(2.0 * (net_benefit(q, c, 20000.0) + c)));

    const auto t = SampleTable::from(random_samples(500, 1));
    const auto nb = net_benefit(t, "D+P", 30000.0);
    CHECK(nb.mean == doctest::Approx(30000.0 * t.qaly.col(2).mean() - t.cost.col(2).mean()));
    CHECK(nb.lower < nb.mean);
    CHECK(nb.upper > nb.mean);
}

TEST_CASE("sample table shape checks")
{
    CHECK_THROWS_AS(SampleTable::from(std::vector<PsaSample>{}), InputError);
    const std::vector<PsaSample> missing = {s(0, "A", 1, 1), s(0, "B", 1, 1), s(1, "A", 1, 1)};
    CHECK_THROWS_AS(SampleTable::from(missing), InputError);
    const std::vector<PsaSample> dup = {s(0, "A", 1, 1), s(0, "A", 1, 1)};
    CHECK_THROWS_AS(SampleTable::from(dup), InputError);
}

TEST_CASE("CEAC")
{
    SUBCASE("a dominating intervention wins everywhere")
    {
        std::vector<PsaSample> v;
        for (int d = 0; d < 50; ++d) {
            v.push_back(s(d, "A", 100.0 + d, 1.0));
            v.push_back(s(d, "B", 200.0 + d, 0.5));
        }
        const auto grid = threshold_grid(0, 50000, 1000);
        const auto c = ceac(v, grid);
        for (Eigen::Index j = 0; j < c.probability.rows(); ++j) CHECK(c.probability(j, 0) == 1.0);
    }
    SUBCASE("identical interventions split ties")
    {
        std::vector<PsaSample> v;
        for (int d = 0; d < 20; ++d)
            for (const char* l : {"A", "B", "C"}) v.push_back(s(d, l, 1000.0 * d, 0.1 * d));
        const std::vector<double> grid = {0.0, 20000.0};
        const auto c = ceac(v, grid);
        for (Eigen::Index j = 0; j < 2; ++j)
            for (Eigen::Index k = 0; k < 3; ++k) CHECK(c.probability(j, k) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("constructed crossing at 10,000")
    {
        // B costs 1000 more for 0.1 more QALY in every draw
        std::vector<PsaSample> v;
        RandomStream rs(2);
        for (int d = 0; d < 100; ++d) {
            const double base_c = sample(rs, Normal{5000, 500}), base_q = sample(rs, Normal{1, 0.1});
            v.push_back(s(d, "A", base_c, base_q));
            v.push_back(s(d, "B", base_c + 1000.0, base_q + 0.1));
        }
        const std::vector<double> grid = {0.0, 5000.0, 9999.0, 10001.0, 20000.0};
        const auto c = ceac(v, grid);
        for (int j = 0; j < 3; ++j) CHECK(c.probability(j, 0) == 1.0);
        for (int j = 3; j < 5; ++j) CHECK(c.probability(j, 1) == 1.0);
    }
    SUBCASE("probabilities sum to one and agree with mean net benefit")
    {
        const auto v = random_samples(2000, 3);
        const auto grid = threshold_grid("0:100000:500");
        CHECK(grid.size() == 201);
        const auto c = ceac(v, grid);
        CHECK(c.probability.rows() == 201);
        for (Eigen::Index j = 0; j < c.probability.rows(); ++j) {
            CHECK(c.probability.row(j).sum() == doctest::Approx(1.0));
            CHECK(c.probability.row(j).minCoeff() >= 0.0);
        }
        const auto res = analyse(v, grid);
        const auto t = SampleTable::from(v);
        for (const auto& ts : res.thresholds) {
            Eigen::Index best = 0;
            (ts.threshold * t.qaly.colwise().mean() - t.cost.colwise().mean()).maxCoeff(&best);
            CHECK(ts.best_mean == static_cast<std::size_t>(best));
        }
        // a common cost shift leaves the curve alone
        auto shifted = v;
        for (auto& x : shifted) x.cost += 12345.0;
        CHECK(ceac(shifted, grid).probability.isApprox(c.probability));
    }
    CHECK_THROWS_AS(ceac(random_samples(10, 1), std::vector<double>{}), InputError);
    CHECK_THROWS_AS(threshold_grid("0:10"), InputError);
    CHECK_THROWS_AS(threshold_grid(10, 0, 1), InputError);
}

TEST_CASE("cost-effectiveness plane")
{
    const auto v = random_samples(300, 4);
    for (const auto& p : ce_plane(v, "D+P", "D+P")) {
        CHECK(p.d_qaly == 0.0);
        CHECK(p.d_cost == 0.0);
    }
    const auto plane = ce_plane(v, "D+P", "M+P");
    REQUIRE(plane.size() == 300);
    for (std::size_t i = 0; i < plane.size(); ++i) CHECK(plane[i].draw == static_cast<long>(i));
    auto neg = v;
    for (auto& x : neg) x.cost = -x.cost;
    const auto reflected = ce_plane(neg, "D+P", "M+P");
    for (std::size_t i = 0; i < plane.size(); ++i) {
        CHECK(reflected[i].d_cost == -plane[i].d_cost);
        CHECK(reflected[i].d_qaly == plane[i].d_qaly);
    }
    std::vector<PsaSample> better;
    for (int d = 0; d < 50; ++d) {
        better.push_back(s(d, "new", 100.0 * d, 1.0 + 0.01 * d));
        better.push_back(s(d, "old", 50.0 * d, 0.9));
    }
    for (const auto& p : ce_plane(better, "new", "old")) CHECK(p.d_qaly > 0.0);
    CHECK_THROWS_AS(ce_plane(v, "D+P", "X"), InputError);
}

TEST_CASE("svg output")
{
    const auto v = random_samples(200, 5);
    const auto c = ceac(v, threshold_grid(0, 60000, 1000));
    const auto svg = ceac_svg(c, "CEAC");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("D+P") != std::string::npos);
    const auto plane = plane_svg(ce_plane(v, "D+P", "M+P"), "plane", 30000);
    CHECK(plane.find("<circle") != std::string::npos);
}
