#pragma once

#include "aar/dsp/audio.hpp"

#include <filesystem>

namespace aar::dsp {

enum class WavEncoding { pcm16, float32 };

// Reads RIFF/WAVE PCM16 or IEEE float32, mono or stereo. Stereo is averaged to mono.
AudioClip load_wav(const std::filesystem::path & path);

// PCM16 values are round(x * 32768) clamped to the int16 range.
void save_wav(const std::filesystem::path & path, const AudioClip & clip, WavEncoding encoding = WavEncoding::pcm16);

} // namespace aar::dsp
