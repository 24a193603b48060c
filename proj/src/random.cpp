#include "evsyn/random.hpp"

#include "evsyn/error.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace evsyn {
namespace {

constexpr unsigned __int128 kMultiplier =
    (static_cast<unsigned __int128>(2549297995355413924ULL) << 64) + 4865540595714422341ULL;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

} // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id)
{
    // The low word keeps stream ids distinct; the high word mixes them.
    const unsigned __int128 sequence =
        (static_cast<unsigned __int128>(splitmix64(stream_id)) << 64) | stream_id;
    const unsigned __int128 init =
        (static_cast<unsigned __int128>(splitmix64(seed)) << 64) | splitmix64(seed ^ 0xda3e39cb94b95bdbULL);
    state_ = 0;
    inc_ = (sequence << 1) | 1u;
    step();
    state_ += init;
    step();
}

void RandomStream::step() { state_ = state_ * kMultiplier + inc_; }

RandomStream::result_type RandomStream::operator()()
{
    step();
    const auto hi = static_cast<std::uint64_t>(state_ >> 64);
    const auto lo = static_cast<std::uint64_t>(state_);
    const unsigned rot = static_cast<unsigned>(state_ >> 122);
    const std::uint64_t x = hi ^ lo;
    return (x >> rot) | (x << ((64 - rot) & 63));
}

RandomStream RandomStream::substream(std::uint64_t key) const
{
    return RandomStream(seed_, splitmix64(stream_id_ ^ splitmix64(key + 0x632be59bd9b4e019ULL)));
}

double RandomStream::uniform01()
{
    // 53 random bits, shifted off zero.
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

Normal Normal::from_variance(double mean, double variance) { return {mean, std::sqrt(variance)}; }

HalfNormal HalfNormal::from_variance(double variance) { return {std::sqrt(variance)}; }

void validate(const Distribution& dist)
{
    std::visit(overloaded{
                   [](const Normal& d) {
                       if (!(d.sd > 0.0) || !std::isfinite(d.mean))
                           throw InputError("Normal: standard deviation must be positive");
                   },
                   [](const HalfNormal& d) {
                       if (!(d.sd > 0.0)) throw InputError("HalfNormal: scale must be positive");
                   },
                   [](const Uniform& d) {
                       if (!(d.lo < d.hi)) throw InputError("Uniform: lower bound must be below upper bound");
                   },
                   [](const Beta& d) {
                       if (!(d.a > 0.0) || !(d.b > 0.0)) throw InputError("Beta: shape parameters must be positive");
                   },
                   [](const Gamma& d) {
                       if (!(d.shape > 0.0) || !(d.rate > 0.0))
                           throw InputError("Gamma: shape and rate must be positive");
                   },
               },
               dist);
}

double sample(RandomStream& stream, const Distribution& dist)
{
    validate(dist);
    return std::visit(overloaded{
                          [&](const Normal& d) { return std::normal_distribution<double>(d.mean, d.sd)(stream); },
                          [&](const HalfNormal& d) {
                              return std::abs(std::normal_distribution<double>(0.0, d.sd)(stream));
                          },
                          [&](const Uniform& d) { return d.lo + (d.hi - d.lo) * stream.uniform01(); },
                          [&](const Beta& d) {
                              const double x = std::gamma_distribution<double>(d.a, 1.0)(stream);
                              const double y = std::gamma_distribution<double>(d.b, 1.0)(stream);
                              return x / (x + y);
                          },
                          [&](const Gamma& d) {
                              return std::gamma_distribution<double>(d.shape, 1.0 / d.rate)(stream);
                          },
                      },
                      dist);
}

double log_density(const Distribution& dist, double x)
{
    constexpr double log_sqrt_2pi = 0.91893853320467274178;
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    return std::visit(overloaded{
                          [&](const Normal& d) {
                              const double z = (x - d.mean) / d.sd;
                              return -0.5 * z * z - std::log(d.sd) - log_sqrt_2pi;
                          },
                          [&](const HalfNormal& d) {
                              if (x < 0.0) return ninf;
                              const double z = x / d.sd;
                              return std::log(2.0) - 0.5 * z * z - std::log(d.sd) - log_sqrt_2pi;
                          },
                          [&](const Uniform& d) {
                              if (x < d.lo || x > d.hi) return ninf;
                              return -std::log(d.hi - d.lo);
                          },
                          [&](const Beta& d) {
                              if (x <= 0.0 || x >= 1.0) return ninf;
                              return (d.a - 1.0) * std::log(x) + (d.b - 1.0) * std::log1p(-x) + std::lgamma(d.a + d.b)
                                     - std::lgamma(d.a) - std::lgamma(d.b);
                          },
                          [&](const Gamma& d) {
                              if (x <= 0.0) return ninf;
                              return d.shape * std::log(d.rate) + (d.shape - 1.0) * std::log(x) - d.rate * x
                                     - std::lgamma(d.shape);
                          },
                      },
                      dist);
}

double mean(const Distribution& dist)
{
    return std::visit(overloaded{
                          [](const Normal& d) { return d.mean; },
                          [](const HalfNormal& d) { return d.sd * std::sqrt(2.0 / std::numbers::pi); },
                          [](const Uniform& d) { return 0.5 * (d.lo + d.hi); },
                          [](const Beta& d) { return d.a / (d.a + d.b); },
                          [](const Gamma& d) { return d.shape / d.rate; },
                      },
                      dist);
}

double variance(const Distribution& dist)
{
    return std::visit(overloaded{
                          [](const Normal& d) { return d.sd * d.sd; },
                          [](const HalfNormal& d) { return d.sd * d.sd * (1.0 - 2.0 / std::numbers::pi); },
                          [](const Uniform& d) { return (d.hi - d.lo) * (d.hi - d.lo) / 12.0; },
                          [](const Beta& d) {
                              const double s = d.a + d.b;
                              return d.a * d.b / (s * s * (s + 1.0));
                          },
                          [](const Gamma& d) { return d.shape / (d.rate * d.rate); },
                      },
                      dist);
}

std::string describe(const Distribution& dist)
{
    std::ostringstream os;
    os.precision(12);
    std::visit(overloaded{
                   [&](const Normal& d) { os << "Normal(mean=" << d.mean << ", sd=" << d.sd << ")"; },
                   [&](const HalfNormal& d) { os << "HalfNormal(sd=" << d.sd << ")"; },
                   [&](const Uniform& d) { os << "Uniform(" << d.lo << ", " << d.hi << ")"; },
                   [&](const Beta& d) { os << "Beta(" << d.a << ", " << d.b << ")"; },
                   [&](const Gamma& d) { os << "Gamma(shape=" << d.shape << ", rate=" << d.rate << ")"; },
               },
               dist);
    return os.str();
}

double draw(RandomStream& stream, const Uncertain& value)
{
    if (const auto* fixed = std::get_if<double>(&value)) return *fixed;
    return sample(stream, std::get<Distribution>(value));
}

double expected(const Uncertain& value)
{
    if (const auto* fixed = std::get_if<double>(&value)) return *fixed;
    return mean(std::get<Distribution>(value));
}

} // namespace evsyn
