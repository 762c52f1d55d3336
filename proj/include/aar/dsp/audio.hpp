#pragma once

#include <vector>

namespace aar::dsp {

struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 24000;

    std::size_t size() const { return samples.size(); }
    double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

bool is_supported_rate(int sample_rate);

// Throws ValidationError unless the clip is non-empty, finite and at a supported rate.
void validate(const AudioClip & clip);

} // namespace aar::dsp
