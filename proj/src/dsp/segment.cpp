#include "aar/dsp/segment.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>

namespace aar::dsp {

std::size_t window_samples(int sample_rate, double window_seconds) {
    require(window_seconds > 0.0, "window length must be positive");
    const auto n = static_cast<long long>(std::llround(window_seconds * sample_rate));
    require(n >= 1, "window shorter than one sample");
    return static_cast<std::size_t>(n);
}

std::vector<AudioClip> segment(const AudioClip & clip, double window_seconds) {
    const std::size_t w = window_samples(clip.sample_rate, window_seconds);
    const std::size_t count = (clip.samples.size() + w - 1) / w;
    std::vector<AudioClip> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        AudioClip seg;
        seg.sample_rate = clip.sample_rate;
        seg.samples.assign(w, 0.0);
        const std::size_t begin = s * w;
        const std::size_t end = std::min(begin + w, clip.samples.size());
        std::copy(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                  clip.samples.begin() + static_cast<std::ptrdiff_t>(end), seg.samples.begin());
        out.push_back(std::move(seg));
    }
    return out;
}

AudioClip reassemble(const std::vector<AudioClip> & segments, std::size_t original_length) {
    AudioClip out;
    if (!segments.empty()) {
        out.sample_rate = segments.front().sample_rate;
    }
    for (const auto & s : segments) {
        out.samples.insert(out.samples.end(), s.samples.begin(), s.samples.end());
    }
    require(out.samples.size() >= original_length, "segments shorter than the original clip");
    out.samples.resize(original_length);
    return out;
}

} // namespace aar::dsp
