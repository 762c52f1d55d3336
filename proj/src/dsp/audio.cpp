#include "aar/dsp/audio.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aar::dsp {

bool is_supported_rate(int sample_rate) {
    switch (sample_rate) {
    case 16000:
    case 22050:
    case 24000:
    case 44100:
    case 48000:
        return true;
    default:
        return false;
    }
}

void validate(const AudioClip & clip) {
    require(!clip.samples.empty(), "audio clip is empty");
    require(is_supported_rate(clip.sample_rate), "unsupported sample rate " + std::to_string(clip.sample_rate));
    require(std::all_of(clip.samples.begin(), clip.samples.end(), [](double v) { return std::isfinite(v); }),
            "audio clip has non-finite samples");
}

} // namespace aar::dsp
