#pragma once

#include "aar/dsp/audio.hpp"

namespace aar::dsp {

// Kaiser-windowed sinc resampling. Output length is round(len * target / source).
AudioClip resample(const AudioClip & clip, int target_rate);

} // namespace aar::dsp
