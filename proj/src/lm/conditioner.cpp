#include "aar/lm/conditioner.hpp"

#include "aar/dsp/spectral.hpp"
#include "aar/error.hpp"
#include "aar/nn/layers.hpp"

#include <algorithm>
#include <cmath>

namespace aar::lm {

namespace {

constexpr int kWindow = 1024;
constexpr int kMels = 64;

} // namespace

StubConditioner::StubConditioner(int cond_dim, std::uint64_t seed) : cond_dim_(cond_dim) {
    require(cond_dim >= 1, "condition size must be positive");
    nn::Rng rng(seed);
    projection_ = nn::normal_tensor({2 * kMels + 2, cond_dim}, 1.0 / std::sqrt(static_cast<double>(cond_dim)), rng);
}

nn::Tensor StubConditioner::features(const dsp::AudioClip & clip) const {
    dsp::AudioClip padded = clip;
    if (static_cast<int>(padded.samples.size()) < kWindow) {
        padded.samples.resize(kWindow, 0.0f);
    }
    dsp::SpectralConfig cfg;
    cfg.window_sizes = {kWindow};
    cfg.mel_bins = {kMels};
    cfg.sample_rate = padded.sample_rate;
    const nn::Tensor mel = dsp::mel_spectrogram(padded, cfg, 0); // (mels, frames)
    const int frames = mel.dim(1);
    nn::Tensor f({2 * kMels + 2});
    double mean_of_means = 0.0;
    double mean_of_stds = 0.0;
    for (int m = 0; m < kMels; ++m) {
        double mu = 0.0;
        for (int t = 0; t < frames; ++t) {
            mu += mel.at(m, t);
        }
        mu /= frames;
        double var = 0.0;
        for (int t = 0; t < frames; ++t) {
            var += (mel.at(m, t) - mu) * (mel.at(m, t) - mu);
        }
        var /= frames;
        f[static_cast<std::size_t>(m)] = mu;
        f[static_cast<std::size_t>(kMels + m)] = std::sqrt(var);
        mean_of_means += mu / kMels;
        mean_of_stds += std::sqrt(var) / kMels;
    }
    for (int m = 0; m < kMels; ++m) {
        f[static_cast<std::size_t>(m)] -= mean_of_means;
        f[static_cast<std::size_t>(kMels + m)] -= mean_of_stds;
    }

    const nn::Tensor spec = dsp::stft(padded, kWindow, kWindow / 4); // (2, frames, bins)
    const int bins = spec.dim(2);
    const std::size_t plane = static_cast<std::size_t>(spec.dim(1)) * bins;
    double centroid = 0.0;
    double flatness = 0.0;
    for (int t = 0; t < spec.dim(1); ++t) {
        double num = 0.0;
        double den = 0.0;
        double log_sum = 0.0;
        for (int k = 0; k < bins; ++k) {
            const std::size_t i = static_cast<std::size_t>(t) * bins + k;
            const double power = spec[i] * spec[i] + spec[plane + i] * spec[plane + i] + 1e-12;
            num += k * std::sqrt(power);
            den += std::sqrt(power);
            log_sum += std::log(power);
        }
        centroid += num / den / (bins - 1);
        flatness += std::exp(log_sum / bins) / (den * den / bins / bins + 1e-12);
    }
    f[static_cast<std::size_t>(2 * kMels)] = centroid / spec.dim(1) - 0.5;
    f[static_cast<std::size_t>(2 * kMels + 1)] = std::min(1.0, flatness / spec.dim(1)) - 0.5;
    return f;
}

nn::Tensor StubConditioner::embed(const dsp::AudioClip & clip) const {
    const nn::Tensor f = features(clip);
    nn::Tensor out({cond_dim_});
    out.matrix() = f.matrix() * projection_.matrix();
    double norm = out.matrix().norm();
    if (norm < 1e-12) {
        out[0] = 1.0;
        norm = 1.0;
    }
    out.matrix() /= norm;
    return out;
}

} // namespace aar::lm
