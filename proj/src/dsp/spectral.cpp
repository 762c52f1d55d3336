#include "aar/dsp/spectral.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aar::dsp {

namespace {
double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
} // namespace

SpectralConfig SpectralConfig::with_windows(std::vector<int> windows, int sample_rate) {
    SpectralConfig cfg;
    cfg.window_sizes = std::move(windows);
    cfg.mel_bins.clear();
    for (int w : cfg.window_sizes) {
        cfg.mel_bins.push_back(std::min(64, w / 8));
    }
    cfg.sample_rate = sample_rate;
    return cfg;
}

void validate(const SpectralConfig & cfg) {
    require(!cfg.window_sizes.empty(), "spectral config needs at least one window");
    require(cfg.mel_bins.size() == cfg.window_sizes.size(), "one mel bin count per window is required");
    for (std::size_t i = 0; i < cfg.window_sizes.size(); ++i) {
        const int w = cfg.window_sizes[i];
        require(w >= 8 && (w & (w - 1)) == 0, "window sizes must be powers of two, got " + std::to_string(w));
        require(i == 0 || w > cfg.window_sizes[i - 1], "window sizes must be strictly increasing");
        require(cfg.mel_bins[i] >= 8, "mel bins must be at least 8");
    }
    require(is_supported_rate(cfg.sample_rate), "unsupported spectral sample rate");
}

nn::Tensor mel_filterbank(int n_fft, int n_mels, int sample_rate) {
    const int bins = n_fft / 2 + 1;
    nn::Tensor fb({bins, n_mels});
    const double top = hz_to_mel(0.5 * sample_rate);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));
    }
    for (int b = 0; b < bins; ++b) {
        const double f = static_cast<double>(b) * sample_rate / n_fft;
        for (int m = 0; m < n_mels; ++m) {
            const double lo = edges[static_cast<std::size_t>(m)];
            const double c = edges[static_cast<std::size_t>(m) + 1];
            const double hi = edges[static_cast<std::size_t>(m) + 2];
            const double w = std::min((f - lo) / (c - lo), (hi - f) / (hi - c));
            fb.at(b, m) = std::max(0.0, w);
        }
    }
    return fb;
}

nn::Var log_mel(const nn::Var & audio, const SpectralConfig & cfg, int scale_index) {
    require(scale_index >= 0 && scale_index < cfg.n_scales(), "spectral scale index out of range");
    const int window = cfg.window_sizes[static_cast<std::size_t>(scale_index)];
    const int mels = cfg.mel_bins[static_cast<std::size_t>(scale_index)];
    require(static_cast<int>(audio.value().size()) >= window, "clip shorter than the spectral window");
    auto mag = nn::magnitude(nn::stft(audio, window, cfg.hop(scale_index)));
    auto mel = nn::matmul(mag, nn::constant(mel_filterbank(window, mels, cfg.sample_rate)));
    return nn::log1p(mel);
}

nn::Tensor audio_tensor(const AudioClip & clip) {
    return nn::Tensor({1, static_cast<int>(clip.samples.size())}, clip.samples);
}

nn::Tensor mel_spectrogram(const AudioClip & clip, const SpectralConfig & cfg, int scale_index) {
    nn::NoGradGuard guard;
    auto fm = log_mel(nn::constant(audio_tensor(clip)), cfg, scale_index).value();
    nn::Tensor out({fm.dim(1), fm.dim(0)});
    out.matrix() = fm.matrix().transpose();
    return out;
}

nn::Tensor stft(const AudioClip & clip, int window, int hop) {
    nn::NoGradGuard guard;
    return nn::stft(nn::constant(audio_tensor(clip)), window, hop).value();
}

} // namespace aar::dsp
