#pragma once

#include "aar/harness/checkpoint.hpp"
#include "aar/harness/config.hpp"
#include "aar/dsp/synth.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace aar::harness {

// Synthetic corpus described by the data section.
std::vector<dsp::LabeledClip> corpus_from_config(const ExperimentConfig & cfg);

// Every clip cut into codec windows, in clip order.
std::vector<dsp::AudioClip> codec_windows(const std::vector<dsp::LabeledClip> & clips, const codec::CodecConfig & cfg);

std::string config_hash(const ExperimentConfig & cfg);

struct LoadedCodec {
    ExperimentConfig config;
    std::unique_ptr<codec::SatModel> model;
    std::string hash; // digest of the checkpoint file
    std::filesystem::path path;
};

struct LoadedAar {
    ExperimentConfig config;
    std::unique_ptr<lm::AarModel> model;
    std::string codec_hash;
    std::filesystem::path path;
};

LoadedCodec load_codec(const std::filesystem::path & path);
// Refuses a transformer trained against a different codec checkpoint or schedule.
LoadedAar load_aar(const std::filesystem::path & path, const LoadedCodec & codec);

// Mean mel distance between each window and its codec reconstruction.
double mean_reconstruction_mel(const codec::SatModel & sat, const std::vector<dsp::AudioClip> & windows,
                               const dsp::SpectralConfig & spectral);

struct TrainOptions {
    std::filesystem::path resume;  // last.ckpt of an interrupted run with the same config
    int stop_after_epoch = -1;     // stop (as if interrupted) once this epoch is finished
    std::ostream * progress = nullptr;
};

struct Stage1Result {
    std::filesystem::path best;
    std::filesystem::path last;
    double initial_mel = 0.0;
    double best_mel = 0.0;
    double final_mel = 0.0;
    int epochs_run = 0;
    long long steps = 0;
    bool budget_exhausted = false;
    std::vector<double> step_losses;
    std::vector<double> epoch_mel;
};

// Writes best.ckpt, last.ckpt and stage1_log.jsonl into out_dir.
Stage1Result train_codec(const ExperimentConfig & cfg, const std::vector<dsp::AudioClip> & windows,
                         const std::filesystem::path & out_dir, const TrainOptions & opts = {});

struct Stage2Result {
    std::filesystem::path checkpoint;
    std::filesystem::path last;
    double initial_ce = 0.0; // evaluation CE with true conditions
    double final_ce = 0.0;
    int epochs_run = 0;
    long long steps = 0;
    bool budget_exhausted = false;
    std::vector<double> step_losses;
    std::vector<double> epoch_ce;
};

struct Stage2Data {
    std::vector<codec::TokenPyramid> pyramids;
    std::vector<nn::Tensor> conds;
    std::vector<lm::Stage2Example> examples;
};

// Pyramids and stub-conditioner embeddings of every window under the frozen codec.
Stage2Data prepare_stage2(const ExperimentConfig & cfg, const codec::SatModel & sat,
                          const std::vector<dsp::AudioClip> & windows);

// Mean cross-entropy over examples with their true conditions.
double eval_cross_entropy(const lm::AarModel & model, const std::vector<lm::Stage2Example> & examples);

// Writes model.ckpt, last.ckpt and stage2_log.jsonl into out_dir. The stage-2
// settings come from cfg; the codec is frozen.
Stage2Result train_aar(const ExperimentConfig & cfg, const LoadedCodec & codec, const std::vector<dsp::AudioClip> & windows,
                       const std::filesystem::path & out_dir, const TrainOptions & opts = {});

} // namespace aar::harness
