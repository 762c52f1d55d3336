#pragma once

#include "aar/codec/sat_model.hpp"
#include "aar/gen/sampler.hpp"
#include "aar/lm/aar_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace aar::gen {

struct BenchReport {
    std::string method; // "next_scale" or "next_token"
    int forward_passes = 0;
    int tokens_generated = 0;
    double wall_seconds = 0.0;   // token generation only
    double decode_seconds = 0.0; // codec decoder, reported separately
    std::vector<int> tokens_per_pass;
};

struct GenerationResult {
    codec::TokenPyramid pyramid;
    dsp::AudioClip clip;
    BenchReport report;
};

// Checks that a transformer can drive the codec (schedule, vocabulary, latent size).
void check_compatible(const lm::AarModel & model, const codec::SatModel & sat);

// Scale-by-scale generation: one cached forward per scale, with a
// guided (condition, null) pair of streams whenever cfg_scale != 1.
GenerationResult generate_next_scale(const lm::AarModel & model, const codec::SatModel & sat, const nn::Tensor & cond,
                                     const SamplerConfig & sc);

// Token-by-token generation over the scale-major flattened pyramid.
GenerationResult generate_next_token(const lm::AarModel & baseline, const codec::SatModel & sat,
                                     const nn::Tensor & cond, const SamplerConfig & sc);

struct BenchSummary {
    int samples = 0;
    int tokens = 0;
    double median_passes_next_scale = 0.0;
    double median_passes_next_token = 0.0;
    double median_wall_next_scale = 0.0;
    double median_wall_next_token = 0.0;
    double pass_ratio = 0.0;
    double wall_ratio = 0.0;
    std::vector<BenchReport> runs;
};

// Runs both methods n_samples times with conditions taken round-robin from conds.
BenchSummary bench_compare(const lm::AarModel & aar, const lm::AarModel & baseline, const codec::SatModel & sat,
                           const std::vector<nn::Tensor> & conds, int n_samples, const SamplerConfig & sc,
                           bool decode = false);

double median(std::vector<double> v);

void write_bench_jsonl(const std::filesystem::path & path, const BenchSummary & summary);
void write_bench_svg(const std::filesystem::path & path, const BenchSummary & summary);

} // namespace aar::gen
