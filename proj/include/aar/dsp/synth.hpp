#pragma once

#include "aar/dsp/audio.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace aar::dsp {

enum class SynthClass : int { sine_sweep = 0, harmonic_stack = 1, low_noise = 2, am_fm_tone = 3 };

constexpr int kSynthClasses = 4;

const char * synth_class_name(int label_id);

struct LabeledClip {
    AudioClip clip;
    int label_id = 0;
};

// Clip i has label i % 4. Output is a pure function of the arguments.
std::vector<LabeledClip> synth_corpus(std::uint64_t seed, int n_clips, int sample_rate, double seconds);

struct ManifestEntry {
    std::string path; // relative to the manifest directory unless absolute
    int label_id = 0;
    double seconds = 0.0;
    int sample_rate = 0;
};

void write_manifest(const std::filesystem::path & path, const std::vector<ManifestEntry> & entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path & path);

// Loads every clip of a manifest, resolving relative paths against its directory.
std::vector<LabeledClip> load_manifest_clips(const std::filesystem::path & manifest);

} // namespace aar::dsp
