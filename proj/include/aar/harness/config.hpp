#pragma once

#include "aar/codec/sat_model.hpp"
#include "aar/gen/sampler.hpp"
#include "aar/lm/aar_model.hpp"
#include "aar/loss/discriminator.hpp"
#include "aar/loss/losses.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace aar::harness {

struct DataConfig {
    std::uint64_t seed = 7;
    int clips = 32;
    double seconds = 1.0;
};

struct Stage1Config {
    int epochs = 100;
    int batch = 8;
    double lr = 3e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double clip_norm = 0.0; // 0 disables clipping
    loss::LossWeights weights;
    double disc_prob = 2.0 / 3.0;
    std::vector<int> disc_windows{2048, 1024, 512};
    int disc_channels = 16;
    int disc_layers = 3;
    std::vector<int> loss_windows{64, 128, 256, 512, 1024};
    std::uint64_t seed = 1;
    double max_minutes = 0.0; // 0 disables the wall-clock budget
};

struct Stage2Config {
    lm::AarMode mode = lm::AarMode::next_scale;
    int depth = 6;
    int width = 256;
    int heads = 8;
    int mlp_ratio = 4;
    int cond_dim = 64;
    int epochs = 100;
    int batch = 8;
    double lr = 1e-4;
    double weight_decay = 0.05;
    double warmup = 0.005;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double cfg_drop_prob = 0.1;
    double clip_norm = 1.0;
    bool qk_norm = true;
    bool cumulative_inputs = false;
    std::uint64_t seed = 2;
    double max_minutes = 0.0;
};

struct BenchConfig {
    int samples = 20;
    std::vector<int> lengths{1, 16, 24, 30, 35, 40, 44, 48, 52, 56, 59, 63, 66, 69, 72, 75};
    std::uint64_t seed = 3;
};

struct ExperimentConfig {
    DataConfig data;
    codec::CodecConfig codec;
    Stage1Config stage1;
    Stage2Config stage2;
    gen::SamplerConfig sampler;
    BenchConfig bench;

    dsp::SpectralConfig loss_spectral() const;
    loss::DiscriminatorConfig discriminator() const;
    lm::AarConfig aar(const codec::SatModel & sat) const;
};

struct ConfigField {
    std::string section;
    std::string key;
    std::string help;
    std::function<std::string(const ExperimentConfig &)> get;
    std::function<void(ExperimentConfig &, const std::string &)> set;

    std::string name() const { return section + "." + key; }
};

const std::vector<ConfigField> & config_fields();
const ConfigField & find_field(const std::string & section, const std::string & key);

void validate(const ExperimentConfig & cfg);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string & name);

// Sectioned INI text: "[section]" headers and "key = value" lines; '#' and ';' start comments.
// Unknown sections or keys are rejected.
void apply_ini(ExperimentConfig & cfg, const std::string & text, const std::string & origin = "config");
ExperimentConfig load_config(const std::filesystem::path & path, const ExperimentConfig & base);
std::string to_ini(const ExperimentConfig & cfg);

} // namespace aar::harness
