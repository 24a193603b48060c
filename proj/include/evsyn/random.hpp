#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <variant>

namespace evsyn {

/**
 * PCG64 (XSL-RR 128/64) generator with 128-bit state and selectable stream.
 *
 * A stream is identified by (seed, stream_id). Distinct stream ids select
 * distinct LCG increments, so sub-streams never share a sequence. Satisfies
 * UniformRandomBitGenerator and can be passed to <random> distributions.
 */
class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    /// Independent child stream; deterministic in (seed, stream_id, key).
    RandomStream substream(std::uint64_t key) const;

    /// Uniform on the open interval (0, 1).
    double uniform01();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    void step();

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    unsigned __int128 state_;
    unsigned __int128 inc_;
};

// Distribution descriptors. Scale parameters are standard deviations; the
// variance convention used in model write-ups is available through from_variance().
struct Normal {
    double mean = 0.0;
    double sd = 1.0;
    static Normal from_variance(double mean, double variance);
};

/// |X| with X ~ Normal(0, sd^2).
struct HalfNormal {
    double sd = 1.0;
    static HalfNormal from_variance(double variance);
};

struct Uniform {
    double lo = 0.0;
    double hi = 1.0;
};

struct Beta {
    double a = 1.0;
    double b = 1.0;
};

/// Shape/rate convention: mean = shape / rate.
struct Gamma {
    double shape = 1.0;
    double rate = 1.0;
};

using Distribution = std::variant<Normal, HalfNormal, Uniform, Beta, Gamma>;

/// Throws InputError when the parameters are out of range.
void validate(const Distribution& dist);

double sample(RandomStream& stream, const Distribution& dist);
double log_density(const Distribution& dist, double x);
double mean(const Distribution& dist);
double variance(const Distribution& dist);
std::string describe(const Distribution& dist);

/// Either a fixed value or a distribution to draw from.
using Uncertain = std::variant<double, Distribution>;

double draw(RandomStream& stream, const Uncertain& value);
double expected(const Uncertain& value);

} // namespace evsyn
