#pragma once

#include "aar/codec/quantize.hpp"
#include "aar/codec/schedule.hpp"
#include "aar/dsp/audio.hpp"
#include "aar/nn/layers.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace aar::codec {

enum class PhiGrouping { unshared, partially_shared, fully_shared };
enum class CodebookSharing { shared, per_scale };
enum class CodebookUpdate { ema, loss };

std::string to_string(PhiGrouping g);
std::string to_string(CodebookSharing s);
std::string to_string(CodebookUpdate u);
PhiGrouping parse_phi_grouping(const std::string & name);
CodebookSharing parse_codebook_sharing(const std::string & name);
CodebookUpdate parse_codebook_update(const std::string & name);

struct CodecConfig {
    int sample_rate = 24000;
    double window_seconds = 1.0;
    std::vector<int> strides{2, 4, 5, 8};
    int channels = 8; // encoder width before the first downsampling block
    int residual_units = 1;
    int latent_dim = 64;
    int codebook_size = 1024;
    ScheduleKind schedule_kind = ScheduleKind::quadratic;
    int scales = 16;
    std::vector<int> explicit_lengths; // used when schedule_kind is explicit
    double gamma = 0.5;
    PhiGrouping phi_grouping = PhiGrouping::partially_shared;
    int phi_group_size = 3;
    CodebookSharing codebook_sharing = CodebookSharing::per_scale;
    CodebookUpdate codebook_update = CodebookUpdate::ema;
    double ema_decay = 0.99;
    int dead_code_epochs = 2;

    int window_samples() const;
    int hop() const; // product of strides
    int top_length() const;
    ScaleSchedule schedule() const;
};

void validate(const CodecConfig & cfg);

// Post-interpolation smoothing: gamma * conv9(z) + (1 - gamma) * z over the time axis.
class PhiUpsampler {
public:
    PhiUpsampler() = default;
    PhiUpsampler(nn::ParamStore & store, int scales, int dim, double gamma, PhiGrouping grouping, int group_size);

    int group_of(int scale_index) const; // 0-based scale -> conv index
    int groups() const { return static_cast<int>(convs_.size()); }
    double gamma() const { return gamma_; }
    nn::Conv1d & conv(int group) { return convs_.at(static_cast<std::size_t>(group)); }

    // z_up is (l, d).
    nn::Var apply(int scale_index, const nn::Var & z_up) const;
    nn::Tensor apply(int scale_index, const nn::Tensor & z_up) const;

private:
    double gamma_ = 0.0;
    PhiGrouping grouping_ = PhiGrouping::fully_shared;
    int group_size_ = 1;
    std::vector<nn::Conv1d> convs_;
};

struct MsrqResult {
    TokenPyramid pyramid;
    nn::Tensor f_hat;                 // (l_K, d)
    nn::Tensor residual;              // f minus every subtracted contribution
    std::vector<nn::Tensor> inputs;   // x_k, the (downsampled) residual quantized at scale k
    std::vector<nn::Tensor> selected; // z_k, chosen codebook rows (l_k, d)
};

// Training-time quantization with straight-through gradients.
struct MsrqTrace {
    nn::Var f_hat;                 // value equals the quantized sum; d/df is the identity, phi receives gradients
    std::vector<nn::Var> inputs;   // x_k, differentiable w.r.t. f
    std::vector<nn::Var> selected; // z_k, codebook rows (differentiable only in loss mode)
    MsrqResult result;
};

struct EmaState {
    std::vector<nn::Tensor> cluster_size; // per codebook (V)
    std::vector<nn::Tensor> embed_sum;    // per codebook (V, d)
    std::vector<std::vector<int>> last_used_epoch;
    bool initialised = false;
};

class SatModel {
public:
    SatModel(const CodecConfig & cfg, std::uint64_t seed);

    const CodecConfig & config() const { return cfg_; }
    const ScaleSchedule & schedule() const { return schedule_; }
    int scales() const { return schedule_.scales(); }
    int vocab() const { return cfg_.codebook_size; }
    int latent_dim() const { return cfg_.latent_dim; }

    // Encoder/decoder/phi weights.
    nn::ParamStore & params() { return params_; }
    const nn::ParamStore & params() const { return params_; }
    // Codebooks, one per scale or a single shared one. Trainable only in loss mode.
    nn::ParamStore & codebook_store() { return codebook_store_; }
    const nn::ParamStore & codebook_store() const { return codebook_store_; }
    const nn::Tensor & codebook(int scale_index) const;
    int codebook_index(int scale_index) const;
    int codebook_count() const { return static_cast<int>(codebooks_.size()); }
    nn::Var codebook_var(int codebook) const { return codebooks_.at(static_cast<std::size_t>(codebook)); }

    PhiUpsampler & phi() { return phi_; }
    const PhiUpsampler & phi() const { return phi_; }
    EmaState & ema() { return ema_; }
    const EmaState & ema() const { return ema_; }

    // audio (1, T) -> latent (l_K, d)
    nn::Var encode_latent(const nn::Var & audio) const;
    // latent (l_K, d) -> audio (1, T)
    nn::Var decode_latent(const nn::Var & latent) const;

    // Runs the first `depth` scales (all when depth < 0).
    MsrqResult msrq_encode(const nn::Tensor & f, int depth = -1) const;
    nn::Tensor msrq_decode(const TokenPyramid & pyramid) const;
    MsrqTrace msrq_train(const nn::Var & f) const;

    // phi(interpolate(lookup(indices), l_K)) for a single scale.
    nn::Tensor scale_contribution(int scale_index, const std::vector<int> & indices) const;

    TokenPyramid encode_audio(const dsp::AudioClip & clip) const;
    dsp::AudioClip decode_audio(const TokenPyramid & pyramid) const;

    void validate_pyramid(const TokenPyramid & pyramid) const;

    // Seeds each codebook from rows of the residuals it would quantize, scale by
    // scale, so later codebooks see residuals of the already seeded ones.
    void init_codebooks_from_latents(const std::vector<nn::Tensor> & latents, nn::Rng & rng);
    // One EMA step from a batch of quantizer traces.
    void ema_update(const std::vector<MsrqResult> & batch, int epoch);
    // Re-seeds codes unused for dead_code_epochs from the given inputs. Returns the number re-seeded.
    int ema_reseed_dead_codes(const std::vector<MsrqResult> & batch, int epoch, nn::Rng & rng);

private:
    struct ResidualUnit {
        nn::Conv1d dilated;
        nn::Conv1d pointwise;
    };
    struct EncoderBlock {
        std::vector<ResidualUnit> units;
        nn::Conv1d down;
    };
    struct DecoderBlock {
        nn::ConvTranspose1d up;
        std::vector<ResidualUnit> units;
    };

    static nn::Var residual(const ResidualUnit & ru, const nn::Var & x);

    CodecConfig cfg_;
    ScaleSchedule schedule_;
    nn::ParamStore params_;
    nn::ParamStore codebook_store_;
    std::vector<nn::Var> codebooks_;
    nn::Conv1d enc_in_;
    std::vector<EncoderBlock> enc_blocks_;
    nn::Conv1d enc_out_;
    nn::Conv1d dec_in_;
    std::vector<DecoderBlock> dec_blocks_;
    nn::Conv1d dec_out_;
    PhiUpsampler phi_;
    EmaState ema_;
};

} // namespace aar::codec
