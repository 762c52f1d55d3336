#include "aar/lm/aar_model.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aar::lm {

using nn::RowMatrix;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kLnEps = 1e-6;

double gelu_value(double x) {
    constexpr double c = 0.7978845608028654;
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double silu_value(double x) { return x / (1.0 + std::exp(-x)); }

Eigen::Map<const Eigen::RowVectorXd> row_of(const Tensor & t) {
    return Eigen::Map<const Eigen::RowVectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

RowMatrix affine(const RowMatrix & x, const nn::Linear & l) {
    RowMatrix y = x * l.weight.value().matrix();
    if (l.bias.defined()) {
        y.rowwise() += row_of(l.bias.value());
    }
    return y;
}

RowMatrix layer_norm(const RowMatrix & x) {
    RowMatrix y(x.rows(), x.cols());
    const double m = static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mu = x.row(r).sum() / m;
        const double var = (x.row(r).array() - mu).square().sum() / m;
        y.row(r) = (x.row(r).array() - mu) / std::sqrt(var + kLnEps);
    }
    return y;
}

Var row_as_vector(const Var & mod, int row, int width) { return nn::reshape(nn::slice_rows(mod, row, row + 1), {width}); }

Var modulate(const Var & x, const Var & mod, int shift_row, int width) {
    const Var shift = row_as_vector(mod, shift_row, width);
    const Var scale = row_as_vector(mod, shift_row + 1, width);
    return nn::add_rowvec(nn::mul_rowvec(nn::layer_norm_rows(x, kLnEps), nn::add_scalar(scale, 1.0)), shift);
}

} // namespace

int AarConfig::positions() const { return std::accumulate(lengths.begin(), lengths.end(), 0); }

void validate(const AarConfig & cfg) {
    require(cfg.depth >= 1, "transformer depth must be >= 1");
    require(cfg.width >= 1 && cfg.heads >= 1, "transformer width and heads must be positive");
    require(cfg.width % cfg.heads == 0, "transformer width must be divisible by heads");
    require(cfg.mlp_ratio >= 1, "mlp_ratio must be >= 1");
    require(cfg.vocab >= 2, "vocabulary must have at least two entries");
    require(cfg.latent_dim >= 1 && cfg.cond_dim >= 1, "latent and condition sizes must be positive");
    require(!cfg.lengths.empty(), "transformer needs a scale schedule");
    for (int l : cfg.lengths) {
        require(l >= 1, "scale lengths must be >= 1");
    }
    require(cfg.cfg_drop_prob >= 0.0 && cfg.cfg_drop_prob <= 1.0, "cfg_drop_prob must lie in [0, 1]");
    require(cfg.init_std > 0.0, "init_std must be positive");
}

nn::Linear AarModel::make_linear(const std::string & name, int in, int out, double std, nn::Rng & rng) {
    nn::Linear l;
    l.weight = params_.add(name + ".weight", nn::normal_tensor({in, out}, std, rng));
    l.bias = params_.add(name + ".bias", Tensor({out}));
    return l;
}

AarModel::AarModel(const AarConfig & cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg_);
    nn::Rng rng(seed);
    block_ids_ = block_ids_for(cfg_.lengths);
    offsets_.push_back(0);
    for (int l : cfg_.lengths) {
        offsets_.push_back(offsets_.back() + l);
    }
    const int w = cfg_.width;
    const int n = cfg_.positions();
    const int k = static_cast<int>(cfg_.lengths.size());
    const double s = cfg_.init_std;
    cond_start_ = make_linear("cond.start", cfg_.cond_dim, w, s, rng);
    cond_trunk_ = make_linear("cond.trunk", cfg_.cond_dim, w, s, rng);
    null_cond_ = params_.add("cond.null", nn::normal_tensor({1, cfg_.cond_dim}, 1.0 / std::sqrt(cfg_.cond_dim), rng));
    if (cfg_.mode == AarMode::next_scale) {
        word_embed_ = make_linear("embed.word", cfg_.latent_dim, w, 1.0 / std::sqrt(cfg_.latent_dim), rng);
    } else {
        token_embed_ = params_.add("embed.token", nn::normal_tensor({cfg_.vocab, w}, s, rng));
    }
    if (cfg_.positional) {
        pos_embed_ = params_.add("embed.pos", nn::normal_tensor({n, w}, s, rng));
    }
    level_embed_ = params_.add("embed.level", nn::normal_tensor({k, w}, s, rng));
    const double out_std = s / std::sqrt(2.0 * cfg_.depth);
    const int hd = w / cfg_.heads;
    for (int i = 0; i < cfg_.depth; ++i) {
        const std::string p = "layer" + std::to_string(i);
        Layer layer;
        layer.ada = make_linear(p + ".ada", w, 6 * w, s, rng);
        auto & bias = layer.ada.bias.mutable_value();
        std::fill(bias.data() + 2 * w, bias.data() + 3 * w, 1.0);
        std::fill(bias.data() + 5 * w, bias.data() + 6 * w, 1.0);
        layer.q = make_linear(p + ".q", w, w, s, rng);
        layer.k = make_linear(p + ".k", w, w, s, rng);
        layer.v = make_linear(p + ".v", w, w, s, rng);
        layer.proj = make_linear(p + ".proj", w, w, out_std, rng);
        layer.log_tau = params_.add(p + ".log_tau", Tensor({cfg_.heads}, 0.5 * std::log(static_cast<double>(hd))));
        layer.fc1 = make_linear(p + ".fc1", w, cfg_.mlp_ratio * w, s, rng);
        layer.fc2 = make_linear(p + ".fc2", cfg_.mlp_ratio * w, w, out_std, rng);
        layers_.push_back(std::move(layer));
    }
    head_ada_ = make_linear("head.ada", w, 2 * w, s, rng);
    head_ = make_linear("head.out", w, cfg_.vocab, 0.1 * s, rng);
}

std::vector<int> AarModel::attention_groups() const {
    if (cfg_.mode == AarMode::next_scale) {
        return block_ids_;
    }
    std::vector<int> g(static_cast<std::size_t>(cfg_.positions()));
    std::iota(g.begin(), g.end(), 0);
    return g;
}

int AarModel::block_offset(int block) const { return offsets_.at(static_cast<std::size_t>(block)); }

Var AarModel::cond_var(const Tensor & cond) const {
    require(static_cast<int>(cond.size()) == cfg_.cond_dim, "condition vector has the wrong size");
    return nn::constant(cond.reshaped({1, cfg_.cond_dim}));
}

Var AarModel::null_cond() const { return null_cond_; }

Var AarModel::embed(const ScaleSequence & seq, const Var & cond) const {
    const int n = cfg_.positions();
    require(seq.lengths == cfg_.lengths, "sequence schedule does not match the model");
    require(seq.positions() == n && seq.block_ids == block_ids_, "sequence layout does not match the model");
    const Var start = cond_start_(cond);
    std::vector<Var> parts;
    if (cfg_.mode == AarMode::next_scale) {
        parts.push_back(nn::repeat_rows(start, cfg_.lengths.front()));
        if (n > cfg_.lengths.front()) {
            require(seq.block_inputs.rank() == 2 && seq.block_inputs.dim(0) == n - cfg_.lengths.front() &&
                        seq.block_inputs.dim(1) == cfg_.latent_dim,
                    "sequence block inputs have the wrong shape");
            parts.push_back(word_embed_(nn::constant(seq.block_inputs)));
        }
    } else {
        require(static_cast<int>(seq.input_tokens.size()) == n - 1, "sequence input tokens have the wrong length");
        parts.push_back(start);
        if (n > 1) {
            for (int t : seq.input_tokens) {
                require(t >= 0 && t < cfg_.vocab, "input token out of range");
            }
            parts.push_back(nn::gather_rows(token_embed_, seq.input_tokens));
        }
    }
    Var x = parts.size() == 1 ? parts.front() : nn::concat_rows(parts);
    if (cfg_.positional) {
        x = nn::add(x, pos_embed_);
    }
    return nn::add(x, nn::gather_rows(level_embed_, block_ids_));
}

Var AarModel::forward(const ScaleSequence & seq, const Var & cond, std::vector<Tensor> * attention_weights) const {
    const int w = cfg_.width;
    Var x = embed(seq, cond);
    const Var trunk = nn::silu(cond_trunk_(cond));
    const auto groups = attention_groups();
    nn::AttentionSpec spec;
    spec.heads = cfg_.heads;
    spec.qk_norm = cfg_.qk_norm;
    if (attention_weights) {
        attention_weights->clear();
    }
    for (const auto & layer : layers_) {
        const Var mod = nn::reshape(layer.ada(trunk), {6, w});
        Var h = modulate(x, mod, 0, w);
        Tensor weights;
        const Var a = nn::attention(layer.q(h), layer.k(h), layer.v(h), layer.log_tau, groups, groups, spec,
                                    attention_weights ? &weights : nullptr);
        if (attention_weights) {
            attention_weights->push_back(std::move(weights));
        }
        x = nn::add(x, nn::mul_rowvec(layer.proj(a), row_as_vector(mod, 2, w)));
        h = modulate(x, mod, 3, w);
        x = nn::add(x, nn::mul_rowvec(layer.fc2(nn::gelu(layer.fc1(h))), row_as_vector(mod, 5, w)));
    }
    const Var hmod = nn::reshape(head_ada_(trunk), {2, w});
    Var logits = head_(modulate(x, hmod, 0, w));
    if (!logits.value().all_finite()) {
        throw DivergenceError("transformer produced non-finite logits");
    }
    return logits;
}

Var AarModel::loss(const ScaleSequence & seq, const Var & cond) const {
    for (int t : seq.targets) {
        require(t >= 0 && t < cfg_.vocab, "target token out of range");
    }
    return nn::cross_entropy(forward(seq, cond), seq.targets);
}

InferenceSession::InferenceSession(const AarModel & model, const std::vector<Tensor> & conds) : model_(model) {
    const auto & cfg = model.cfg_;
    require(!conds.empty(), "inference session needs at least one stream");
    const int w = cfg.width;
    const int n = cfg.positions();
    groups_ = model.attention_groups();
    for (const auto & c : conds) {
        require(static_cast<int>(c.size()) == cfg.cond_dim, "condition vector has the wrong size");
        const RowMatrix cm = Eigen::Map<const RowMatrix>(c.data(), 1, cfg.cond_dim);
        const RowMatrix start = affine(cm, model.cond_start_);
        start_.emplace_back(std::vector<int>{1, w}, std::vector<double>(start.data(), start.data() + w));
        RowMatrix trunk = affine(cm, model.cond_trunk_);
        trunk = trunk.unaryExpr([](double v) { return silu_value(v); });
        std::vector<LayerMods> mods;
        for (const auto & layer : model.layers_) {
            const RowMatrix m = affine(trunk, layer.ada);
            mods.push_back({Eigen::Map<const RowMatrix>(m.data(), 6, w)});
        }
        mods_.push_back(std::move(mods));
        const RowMatrix hm = affine(trunk, model.head_ada_);
        head_mods_.emplace_back(Eigen::Map<const RowMatrix>(hm.data(), 2, w));
        StreamCache cache;
        for (int i = 0; i < cfg.depth; ++i) {
            cache.keys.emplace_back(n, w);
            cache.values.emplace_back(n, w);
        }
        caches_.push_back(std::move(cache));
    }
}

std::vector<Tensor> InferenceSession::start_rows() const {
    const auto & cfg = model_.cfg_;
    const int w = cfg.width;
    const int rows = cfg.mode == AarMode::next_scale ? cfg.lengths.front() : 1;
    std::vector<Tensor> out;
    for (const auto & start : start_) {
        Tensor t({rows, w});
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < w; ++c) {
                double v = start[static_cast<std::size_t>(c)] +
                           model_.level_embed_.value().at(model_.block_ids_[static_cast<std::size_t>(r)], c);
                if (cfg.positional) {
                    v += model_.pos_embed_.value().at(r, c);
                }
                t.at(r, c) = v;
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

Tensor InferenceSession::block_rows(int block, const Tensor & inputs) const {
    const auto & cfg = model_.cfg_;
    require(cfg.mode == AarMode::next_scale, "block_rows needs a next_scale model");
    require(block >= 1 && block < static_cast<int>(cfg.lengths.size()), "block index out of range");
    const int l = cfg.lengths[static_cast<std::size_t>(block)];
    require(inputs.rank() == 2 && inputs.dim(0) == l && inputs.dim(1) == cfg.latent_dim,
            "block inputs have the wrong shape");
    RowMatrix e = affine(RowMatrix(inputs.matrix()), model_.word_embed_);
    const int off = model_.block_offset(block);
    e.rowwise() += model_.level_embed_.value().matrix().row(block);
    if (cfg.positional) {
        e += model_.pos_embed_.value().matrix().middleRows(off, l);
    }
    return Tensor({l, cfg.width}, std::vector<double>(e.data(), e.data() + e.size()));
}

Tensor InferenceSession::token_row(int pos, int token) const {
    const auto & cfg = model_.cfg_;
    require(cfg.mode == AarMode::next_token, "token_row needs a next_token model");
    require(pos >= 1 && pos < cfg.positions(), "token position out of range");
    require(token >= 0 && token < cfg.vocab, "token out of range");
    Eigen::RowVectorXd e = model_.token_embed_.value().matrix().row(token);
    e += model_.level_embed_.value().matrix().row(model_.block_ids_[static_cast<std::size_t>(pos)]);
    if (cfg.positional) {
        e += model_.pos_embed_.value().matrix().row(pos);
    }
    return Tensor({1, cfg.width}, std::vector<double>(e.data(), e.data() + e.size()));
}

std::vector<Tensor> InferenceSession::step(const std::vector<Tensor> & rows) {
    const auto & cfg = model_.cfg_;
    const int b = streams();
    require(static_cast<int>(rows.size()) == b, "one row block per stream is required");
    const int n = rows.front().dim(0);
    const int w = cfg.width;
    const int hd = w / cfg.heads;
    require(n >= 1 && cursor_ + n <= cfg.positions(), "inference step runs past the sequence length");
    RowMatrix x(static_cast<Eigen::Index>(b) * n, w);
    for (int s = 0; s < b; ++s) {
        const auto & r = rows[static_cast<std::size_t>(s)];
        require(r.rank() == 2 && r.dim(0) == n && r.dim(1) == w, "step rows have the wrong shape");
        x.middleRows(static_cast<Eigen::Index>(s) * n, n) = r.matrix();
    }
    const int m = cursor_ + n;
    auto modulate_rows = [&](const RowMatrix & in, auto mod_of, int shift_row) {
        RowMatrix h = layer_norm(in);
        for (int s = 0; s < b; ++s) {
            const RowMatrix & mod = mod_of(s);
            auto blk = h.middleRows(static_cast<Eigen::Index>(s) * n, n);
            blk = (blk.array().rowwise() * (mod.row(shift_row + 1).array() + 1.0)).matrix();
            blk.rowwise() += mod.row(shift_row);
        }
        return h;
    };
    for (std::size_t li = 0; li < model_.layers_.size(); ++li) {
        const auto & layer = model_.layers_[li];
        auto mod_of = [&](int s) -> const RowMatrix & { return mods_[static_cast<std::size_t>(s)][li].mod; };
        RowMatrix h = modulate_rows(x, mod_of, 0);
        RowMatrix q = affine(h, layer.q);
        RowMatrix k = affine(h, layer.k);
        const RowMatrix v = affine(h, layer.v);
        std::vector<double> scale(static_cast<std::size_t>(cfg.heads), 1.0 / std::sqrt(static_cast<double>(hd)));
        if (cfg.qk_norm) {
            for (int hh = 0; hh < cfg.heads; ++hh) {
                scale[static_cast<std::size_t>(hh)] = std::exp(std::min(
                    layer.log_tau.value()[static_cast<std::size_t>(hh)], nn::AttentionSpec{}.max_log_temperature));
                for (Eigen::Index r = 0; r < q.rows(); ++r) {
                    auto qb = q.block(r, hh * hd, 1, hd);
                    qb /= std::max(qb.norm(), 1e-12);
                    auto kb = k.block(r, hh * hd, 1, hd);
                    kb /= std::max(kb.norm(), 1e-12);
                }
            }
        }
        RowMatrix o(static_cast<Eigen::Index>(b) * n, w);
        for (int s = 0; s < b; ++s) {
            auto & cache = caches_[static_cast<std::size_t>(s)];
            cache.keys[li].middleRows(cursor_, n) = k.middleRows(static_cast<Eigen::Index>(s) * n, n);
            cache.values[li].middleRows(cursor_, n) = v.middleRows(static_cast<Eigen::Index>(s) * n, n);
            for (int hh = 0; hh < cfg.heads; ++hh) {
                RowMatrix p = scale[static_cast<std::size_t>(hh)] *
                              (q.block(static_cast<Eigen::Index>(s) * n, hh * hd, n, hd) *
                               cache.keys[li].block(0, hh * hd, m, hd).transpose());
                for (int i = 0; i < n; ++i) {
                    const int gi = groups_[static_cast<std::size_t>(cursor_ + i)];
                    double mx = -INFINITY;
                    for (int j = 0; j < m; ++j) {
                        if (groups_[static_cast<std::size_t>(j)] <= gi) {
                            mx = std::max(mx, p(i, j));
                        }
                    }
                    double z = 0.0;
                    for (int j = 0; j < m; ++j) {
                        const double e = groups_[static_cast<std::size_t>(j)] <= gi ? std::exp(p(i, j) - mx) : 0.0;
                        p(i, j) = e;
                        z += e;
                    }
                    p.row(i) /= z;
                }
                o.block(static_cast<Eigen::Index>(s) * n, hh * hd, n, hd).noalias() =
                    p * cache.values[li].block(0, hh * hd, m, hd);
            }
        }
        RowMatrix a = affine(o, layer.proj);
        for (int s = 0; s < b; ++s) {
            auto blk = a.middleRows(static_cast<Eigen::Index>(s) * n, n);
            x.middleRows(static_cast<Eigen::Index>(s) * n, n) +=
                (blk.array().rowwise() * mod_of(s).row(2).array()).matrix();
        }
        h = modulate_rows(x, mod_of, 3);
        RowMatrix f = affine(h, layer.fc1).unaryExpr([](double t) { return gelu_value(t); });
        f = affine(f, layer.fc2);
        for (int s = 0; s < b; ++s) {
            auto blk = f.middleRows(static_cast<Eigen::Index>(s) * n, n);
            x.middleRows(static_cast<Eigen::Index>(s) * n, n) +=
                (blk.array().rowwise() * mod_of(s).row(5).array()).matrix();
        }
    }
    const RowMatrix h = modulate_rows(x, [&](int s) -> const RowMatrix & { return head_mods_[static_cast<std::size_t>(s)]; }, 0);
    const RowMatrix logits = affine(h, model_.head_);
    if (!logits.allFinite()) {
        throw DivergenceError("transformer produced non-finite logits");
    }
    std::vector<Tensor> out;
    for (int s = 0; s < b; ++s) {
        const auto blk = logits.middleRows(static_cast<Eigen::Index>(s) * n, n);
        Tensor t({n, cfg.vocab});
        t.matrix() = blk;
        out.push_back(std::move(t));
    }
    cursor_ = m;
    ++passes_;
    return out;
}

Stage2StepResult train_step_stage2(AarModel & model, nn::Adam & opt, const std::vector<Stage2Example> & batch,
                                   double lr, nn::Rng & rng, double clip_norm) {
    require(!batch.empty(), "stage-2 batch is empty");
    Stage2StepResult result;
    model.params().zero_grad();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto & ex : batch) {
        const bool drop = u(rng) < model.config().cfg_drop_prob;
        result.dropped += drop ? 1 : 0;
        const Var cond = drop ? model.null_cond() : model.cond_var(ex.cond);
        const Var l = model.loss(ex.sequence, cond);
        if (!std::isfinite(l.item())) {
            throw DivergenceError("stage-2 loss is not finite");
        }
        result.loss += l.item() * inv;
        nn::backward(nn::scale(l, inv));
    }
    result.grad_norm = nn::clip_grad_norm(model.params(), clip_norm);
    if (!std::isfinite(result.grad_norm)) {
        throw DivergenceError("stage-2 gradient norm is not finite");
    }
    opt.step(lr);
    return result;
}

} // namespace aar::lm
