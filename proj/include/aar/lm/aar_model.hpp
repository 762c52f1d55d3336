#pragma once

#include "aar/lm/sequence.hpp"
#include "aar/nn/layers.hpp"
#include "aar/nn/optim.hpp"

#include <cstdint>
#include <vector>

namespace aar::lm {

struct AarConfig {
    AarMode mode = AarMode::next_scale;
    int depth = 6;
    int width = 256;
    int heads = 8;
    int mlp_ratio = 4;
    int vocab = 1024;
    int latent_dim = 64;
    int cond_dim = 64;
    std::vector<int> lengths; // scale schedule l_1..l_K
    double cfg_drop_prob = 0.1;
    bool qk_norm = true;
    bool cumulative_inputs = false;
    bool positional = true;
    double init_std = 0.02;

    int positions() const;
};

void validate(const AarConfig & cfg);

// Decoder-only transformer with AdaLN conditioning. In next_scale mode the
// mask is block-causal over scales; in next_token mode it is causal per position.
class AarModel {
public:
    AarModel(const AarConfig & cfg, std::uint64_t seed);

    const AarConfig & config() const { return cfg_; }
    nn::ParamStore & params() { return params_; }
    const nn::ParamStore & params() const { return params_; }

    // Attention group per position (block ids or positions).
    std::vector<int> attention_groups() const;

    nn::Var cond_var(const nn::Tensor & cond) const; // (1, cond_dim) constant
    nn::Var null_cond() const;                       // (1, cond_dim) learned

    // (N, width) input embeddings.
    nn::Var embed(const ScaleSequence & seq, const nn::Var & cond) const;
    // (N, vocab) logits. attention_weights receives one (heads, N, N) tensor per layer.
    nn::Var forward(const ScaleSequence & seq, const nn::Var & cond,
                    std::vector<nn::Tensor> * attention_weights = nullptr) const;
    nn::Var loss(const ScaleSequence & seq, const nn::Var & cond) const;

private:
    friend class InferenceSession;

    struct Layer {
        nn::Linear ada; // width -> 6 width: shift, scale, gate for attention then mlp
        nn::Linear q;
        nn::Linear k;
        nn::Linear v;
        nn::Linear proj;
        nn::Var log_tau;
        nn::Linear fc1;
        nn::Linear fc2;
    };

    nn::Linear make_linear(const std::string & name, int in, int out, double std, nn::Rng & rng);
    int block_offset(int block) const;

    AarConfig cfg_;
    std::vector<int> block_ids_;
    std::vector<int> offsets_;
    nn::ParamStore params_;
    nn::Linear cond_start_;
    nn::Linear cond_trunk_;
    nn::Var null_cond_;
    nn::Linear word_embed_;
    nn::Var token_embed_;
    nn::Var pos_embed_;
    nn::Var level_embed_;
    std::vector<Layer> layers_;
    nn::Linear head_ada_;
    nn::Linear head_;
};

// Cached incremental forward over one or more streams that share weights
// (e.g. conditional and unconditional rows for guidance). Each call appends
// rows to every stream and returns their logits.
class InferenceSession {
public:
    InferenceSession(const AarModel & model, const std::vector<nn::Tensor> & conds);

    int streams() const { return static_cast<int>(mods_.size()); }
    int cursor() const { return cursor_; }
    int forward_passes() const { return passes_; }

    // Rows of the condition block for every stream: (l_1, width) each.
    std::vector<nn::Tensor> start_rows() const;
    // Embedded rows of block k >= 1 from its latent inputs (next_scale mode).
    nn::Tensor block_rows(int block, const nn::Tensor & inputs) const;
    // Embedded row for one token fed at position pos >= 1 (next_token mode).
    nn::Tensor token_row(int pos, int token) const;

    // Appends n rows per stream (same n for all) and returns (n, vocab) logits per stream.
    std::vector<nn::Tensor> step(const std::vector<nn::Tensor> & rows);

private:
    struct LayerMods {
        nn::RowMatrix mod; // (6, width)
    };
    struct StreamCache {
        std::vector<nn::RowMatrix> keys; // per layer (N, width), normalised per head when qk_norm
        std::vector<nn::RowMatrix> values;
    };

    const AarModel & model_;
    std::vector<std::vector<LayerMods>> mods_; // [stream][layer]
    std::vector<nn::RowMatrix> head_mods_;     // [stream] (2, width)
    std::vector<nn::Tensor> start_;            // [stream] (1, width) projected condition
    std::vector<StreamCache> caches_;
    std::vector<int> groups_;
    int cursor_ = 0;
    int passes_ = 0;
};

struct Stage2Example {
    ScaleSequence sequence;
    nn::Tensor cond; // (cond_dim)
};

struct Stage2StepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
    int dropped = 0; // examples whose condition was replaced by the null embedding
};

// One optimizer step: mean cross-entropy over the batch with per-example
// condition dropout, global-norm clipping and an AdamW update at lr.
Stage2StepResult train_step_stage2(AarModel & model, nn::Adam & opt, const std::vector<Stage2Example> & batch,
                                   double lr, nn::Rng & rng, double clip_norm = 1.0);

} // namespace aar::lm
