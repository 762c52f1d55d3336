#pragma once

#include "aar/dsp/audio.hpp"

#include <vector>

namespace aar::dsp {

// Non-overlapping windows; the last one is zero-padded to full length.
std::vector<AudioClip> segment(const AudioClip & clip, double window_seconds);

// Concatenates segments and truncates to original_length samples.
AudioClip reassemble(const std::vector<AudioClip> & segments, std::size_t original_length);

std::size_t window_samples(int sample_rate, double window_seconds);

} // namespace aar::dsp
