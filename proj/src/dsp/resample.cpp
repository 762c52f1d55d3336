#include "aar/dsp/resample.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace aar::dsp {

namespace {

constexpr double kZeroCrossings = 24.0;
constexpr double kRolloff = 0.94;
constexpr double kBeta = 8.6;

double kaiser(double x, double half) {
    const double r = x / half;
    if (std::fabs(r) >= 1.0) {
        return 0.0;
    }
    return std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / std::cyl_bessel_i(0.0, kBeta);
}

double sinc(double x) {
    if (x == 0.0) {
        return 1.0;
    }
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

} // namespace

AudioClip resample(const AudioClip & clip, int target_rate) {
    require(is_supported_rate(target_rate), "unsupported target rate " + std::to_string(target_rate));
    if (target_rate == clip.sample_rate) {
        return clip;
    }
    const long long src = clip.sample_rate;
    const long long dst = target_rate;
    const long long g = std::gcd(src, dst);
    const long long up = dst / g;   // output steps per input step group
    const long long down = src / g; // input advance per output step, in units of 1/up samples
    const long long n_in = static_cast<long long>(clip.samples.size());
    const long long n_out = std::llround(static_cast<double>(n_in) * static_cast<double>(dst) / static_cast<double>(src));

    const double fc = kRolloff * std::min(1.0, static_cast<double>(dst) / static_cast<double>(src));
    const double half = kZeroCrossings / fc;
    const int taps = static_cast<int>(std::ceil(half));

    // One filter per fractional phase p/up; tap j covers input offset j - taps + 1.
    std::vector<std::vector<double>> bank(static_cast<std::size_t>(up));
    for (long long p = 0; p < up; ++p) {
        auto & h = bank[static_cast<std::size_t>(p)];
        h.resize(static_cast<std::size_t>(2 * taps));
        const double frac = static_cast<double>(p) / static_cast<double>(up);
        for (int j = 0; j < 2 * taps; ++j) {
            const double tau = frac - static_cast<double>(j - taps + 1);
            h[static_cast<std::size_t>(j)] = fc * sinc(fc * tau) * kaiser(tau, half);
        }
    }

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (long long i = 0; i < n_out; ++i) {
        const long long num = i * down;
        const long long base = num / up;
        const auto & h = bank[static_cast<std::size_t>(num % up)];
        double acc = 0.0;
        for (int j = 0; j < 2 * taps; ++j) {
            const long long n = base + j - taps + 1;
            if (n >= 0 && n < n_in) {
                acc += h[static_cast<std::size_t>(j)] * clip.samples[static_cast<std::size_t>(n)];
            }
        }
        out.samples[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

} // namespace aar::dsp
