#pragma once

#include "aar/dsp/audio.hpp"
#include "aar/nn/autograd.hpp"

#include <vector>

namespace aar::dsp {

struct SpectralConfig {
    std::vector<int> window_sizes{64, 128, 256, 512, 1024};
    std::vector<int> mel_bins{8, 16, 32, 64, 64};
    int sample_rate = 24000;

    int n_scales() const { return static_cast<int>(window_sizes.size()); }
    int hop(int i) const { return window_sizes.at(static_cast<std::size_t>(i)) / 4; }

    // Windows as given with min(64, window / 8) mel bins each.
    static SpectralConfig with_windows(std::vector<int> windows, int sample_rate);
};

void validate(const SpectralConfig & cfg);

// HTK-mel triangular filters with unit peaks, shape (n_fft/2 + 1, n_mels).
nn::Tensor mel_filterbank(int n_fft, int n_mels, int sample_rate);

// Differentiable log(1 + mel(|STFT|)) of audio (1, T) at scale i, shape (frames, mels).
nn::Var log_mel(const nn::Var & audio, const SpectralConfig & cfg, int scale_index);

// Same transform on a clip, returned as (mels, frames).
nn::Tensor mel_spectrogram(const AudioClip & clip, const SpectralConfig & cfg, int scale_index);

// Complex Hann STFT as (2, frames, window/2 + 1) holding (re, im).
nn::Tensor stft(const AudioClip & clip, int window, int hop);

nn::Tensor audio_tensor(const AudioClip & clip);

} // namespace aar::dsp
