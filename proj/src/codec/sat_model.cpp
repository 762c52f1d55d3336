#include "aar/codec/sat_model.hpp"

#include "aar/dsp/segment.hpp"
#include "aar/error.hpp"
#include "aar/nn/interp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aar::codec {

std::string to_string(PhiGrouping g) {
    switch (g) {
    case PhiGrouping::unshared:
        return "unshared";
    case PhiGrouping::partially_shared:
        return "partially_shared";
    case PhiGrouping::fully_shared:
        return "fully_shared";
    }
    return "unknown";
}

std::string to_string(CodebookSharing s) { return s == CodebookSharing::shared ? "shared" : "per_scale"; }
std::string to_string(CodebookUpdate u) { return u == CodebookUpdate::ema ? "ema" : "loss"; }

PhiGrouping parse_phi_grouping(const std::string & name) {
    if (name == "unshared") {
        return PhiGrouping::unshared;
    }
    if (name == "partially_shared") {
        return PhiGrouping::partially_shared;
    }
    if (name == "fully_shared") {
        return PhiGrouping::fully_shared;
    }
    throw ValidationError("unknown phi grouping '" + name + "'");
}

CodebookSharing parse_codebook_sharing(const std::string & name) {
    if (name == "shared") {
        return CodebookSharing::shared;
    }
    if (name == "per_scale") {
        return CodebookSharing::per_scale;
    }
    throw ValidationError("unknown codebook sharing '" + name + "'");
}

CodebookUpdate parse_codebook_update(const std::string & name) {
    if (name == "ema") {
        return CodebookUpdate::ema;
    }
    if (name == "loss") {
        return CodebookUpdate::loss;
    }
    throw ValidationError("unknown codebook update '" + name + "'");
}

int CodecConfig::window_samples() const {
    return static_cast<int>(dsp::window_samples(sample_rate, window_seconds));
}

int CodecConfig::hop() const { return std::accumulate(strides.begin(), strides.end(), 1, std::multiplies<>()); }

int CodecConfig::top_length() const { return window_samples() / hop(); }

ScaleSchedule CodecConfig::schedule() const {
    if (schedule_kind == ScheduleKind::explicit_list) {
        return explicit_schedule(explicit_lengths, top_length());
    }
    return make_schedule(schedule_kind, scales, top_length());
}

void validate(const CodecConfig & cfg) {
    require(dsp::is_supported_rate(cfg.sample_rate), "unsupported codec sample rate");
    require(!cfg.strides.empty(), "codec needs at least one stride");
    for (int s : cfg.strides) {
        require(s >= 1, "strides must be positive");
    }
    require(cfg.window_samples() % cfg.hop() == 0, "window samples must be a multiple of the stride product");
    require(cfg.channels >= 1 && cfg.residual_units >= 0, "invalid codec widths");
    require(cfg.latent_dim >= 1, "latent dim must be positive");
    require(cfg.codebook_size >= 1 && cfg.codebook_size <= 65536, "codebook size must be in [1, 65536]");
    require(cfg.gamma >= 0.0 && cfg.gamma <= 1.0, "gamma must be in [0, 1]");
    require(cfg.phi_group_size >= 1, "phi group size must be positive");
    require(cfg.ema_decay > 0.0 && cfg.ema_decay < 1.0, "ema decay must be in (0, 1)");
    require(cfg.dead_code_epochs >= 1, "dead code epochs must be positive");
    if (cfg.schedule_kind != ScheduleKind::explicit_list) {
        require(cfg.scales >= 1, "scale count must be positive");
    }
    validate(cfg.schedule());
}

// ---------------------------------------------------------------- phi

PhiUpsampler::PhiUpsampler(nn::ParamStore & store, int scales, int dim, double gamma, PhiGrouping grouping,
                           int group_size)
    : gamma_(gamma), grouping_(grouping), group_size_(group_size) {
    int groups = 1;
    switch (grouping) {
    case PhiGrouping::unshared:
        groups = scales;
        break;
    case PhiGrouping::partially_shared:
        groups = (scales + group_size - 1) / group_size;
        break;
    case PhiGrouping::fully_shared:
        groups = 1;
        break;
    }
    nn::Rng unused(0);
    for (int g = 0; g < groups; ++g) {
        nn::Conv1d conv(store, "phi." + std::to_string(g), dim, dim, 9, unused);
        auto & w = conv.weight.mutable_value();
        w.fill(0.0);
        for (int c = 0; c < dim; ++c) {
            w[(static_cast<std::size_t>(c) * dim + c) * 9 + 4] = 1.0;
        }
        conv.bias.mutable_value().fill(0.0);
        convs_.push_back(conv);
    }
}

int PhiUpsampler::group_of(int scale_index) const {
    switch (grouping_) {
    case PhiGrouping::unshared:
        return scale_index;
    case PhiGrouping::partially_shared:
        return scale_index / group_size_;
    case PhiGrouping::fully_shared:
        return 0;
    }
    return 0;
}

nn::Var PhiUpsampler::apply(int scale_index, const nn::Var & z_up) const {
    if (gamma_ == 0.0) {
        return z_up;
    }
    const auto & conv = convs_.at(static_cast<std::size_t>(group_of(scale_index)));
    auto smoothed = nn::transpose(conv(nn::transpose(z_up)));
    if (gamma_ == 1.0) {
        return smoothed;
    }
    return nn::add(nn::scale(smoothed, gamma_), nn::scale(z_up, 1.0 - gamma_));
}

nn::Tensor PhiUpsampler::apply(int scale_index, const nn::Tensor & z_up) const {
    nn::NoGradGuard guard;
    return apply(scale_index, nn::constant(z_up)).value();
}

// ---------------------------------------------------------------- model

SatModel::SatModel(const CodecConfig & cfg, std::uint64_t seed) : cfg_(cfg) {
    validate(cfg_);
    schedule_ = cfg_.schedule();
    nn::Rng rng(seed);
    const int blocks = static_cast<int>(cfg_.strides.size());
    auto make_units = [&](const std::string & prefix, int ch) {
        std::vector<ResidualUnit> units;
        int dilation = 1;
        for (int u = 0; u < cfg_.residual_units; ++u) {
            const std::string p = prefix + ".unit" + std::to_string(u);
            units.push_back({nn::Conv1d(params_, p + ".dilated", ch, ch, 7, rng, 1, dilation),
                             nn::Conv1d(params_, p + ".pointwise", ch, ch, 1, rng)});
            dilation *= 3;
        }
        return units;
    };

    enc_in_ = nn::Conv1d(params_, "enc.in", 1, cfg_.channels, 7, rng);
    int ch = cfg_.channels;
    for (int b = 0; b < blocks; ++b) {
        const int s = cfg_.strides[static_cast<std::size_t>(b)];
        const std::string p = "enc.block" + std::to_string(b);
        EncoderBlock blk;
        blk.units = make_units(p, ch);
        blk.down = nn::Conv1d(params_, p + ".down", ch, 2 * ch, 2 * s, rng, s).with_padding((s + 1) / 2, s / 2);
        enc_blocks_.push_back(std::move(blk));
        ch *= 2;
    }
    enc_out_ = nn::Conv1d(params_, "enc.out", ch, cfg_.latent_dim, 3, rng);

    dec_in_ = nn::Conv1d(params_, "dec.in", cfg_.latent_dim, ch, 7, rng);
    for (int b = blocks - 1; b >= 0; --b) {
        const int s = cfg_.strides[static_cast<std::size_t>(b)];
        const std::string p = "dec.block" + std::to_string(blocks - 1 - b);
        DecoderBlock blk;
        blk.up = nn::ConvTranspose1d(params_, p + ".up", ch, ch / 2, 2 * s, s, (s + 1) / 2, s / 2, rng);
        ch /= 2;
        blk.units = make_units(p, ch);
        dec_blocks_.push_back(std::move(blk));
    }
    dec_out_ = nn::Conv1d(params_, "dec.out", ch, 1, 7, rng);

    phi_ = PhiUpsampler(params_, schedule_.scales(), cfg_.latent_dim, cfg_.gamma, cfg_.phi_grouping,
                        cfg_.phi_group_size);

    const int books = cfg_.codebook_sharing == CodebookSharing::shared ? 1 : schedule_.scales();
    const double init_std = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
    for (int c = 0; c < books; ++c) {
        codebooks_.push_back(codebook_store_.add(
            "codebook." + std::to_string(c), nn::normal_tensor({cfg_.codebook_size, cfg_.latent_dim}, init_std, rng)));
    }
    ema_.cluster_size.assign(static_cast<std::size_t>(books), nn::Tensor({cfg_.codebook_size}, 1.0));
    for (int c = 0; c < books; ++c) {
        ema_.embed_sum.push_back(codebooks_[static_cast<std::size_t>(c)].value());
    }
    ema_.last_used_epoch.assign(static_cast<std::size_t>(books), std::vector<int>(static_cast<std::size_t>(cfg_.codebook_size), 0));
}

int SatModel::codebook_index(int scale_index) const {
    require(scale_index >= 0 && scale_index < scales(), "scale index out of range");
    return cfg_.codebook_sharing == CodebookSharing::shared ? 0 : scale_index;
}

const nn::Tensor & SatModel::codebook(int scale_index) const {
    return codebooks_[static_cast<std::size_t>(codebook_index(scale_index))].value();
}

nn::Var SatModel::residual(const ResidualUnit & ru, const nn::Var & x) {
    return nn::add(x, ru.pointwise(nn::elu(ru.dilated(nn::elu(x)))));
}

nn::Var SatModel::encode_latent(const nn::Var & audio) const {
    require(static_cast<int>(audio.value().size()) == cfg_.window_samples(), "encoder input must be one window");
    nn::Var h = enc_in_(nn::reshape(audio, {1, cfg_.window_samples()}));
    for (const auto & blk : enc_blocks_) {
        for (const auto & ru : blk.units) {
            h = residual(ru, h);
        }
        h = blk.down(nn::elu(h));
    }
    h = enc_out_(nn::elu(h));
    return nn::transpose(h);
}

nn::Var SatModel::decode_latent(const nn::Var & latent) const {
    require(latent.value().rank() == 2 && latent.dim(0) == schedule_.top() && latent.dim(1) == cfg_.latent_dim,
            "decoder input must be (top_length, latent_dim)");
    nn::Var h = dec_in_(nn::transpose(latent));
    for (const auto & blk : dec_blocks_) {
        h = blk.up(nn::elu(h));
        for (const auto & ru : blk.units) {
            h = residual(ru, h);
        }
    }
    return dec_out_(nn::elu(h));
}

nn::Tensor SatModel::scale_contribution(int scale_index, const std::vector<int> & indices) const {
    const int top = schedule_.top();
    nn::Tensor z = gather(codebook(scale_index), indices);
    return phi_.apply(scale_index, interpolate_tokens(z, top));
}

MsrqResult SatModel::msrq_encode(const nn::Tensor & f, int depth) const {
    const int top = schedule_.top();
    require(f.rank() == 2 && f.dim(0) == top && f.dim(1) == cfg_.latent_dim, "latent shape mismatch");
    const int k_max = depth < 0 ? scales() : depth;
    require(k_max >= 0 && k_max <= scales(), "msrq depth out of range");
    MsrqResult out;
    out.residual = f;
    out.f_hat = nn::Tensor(f.shape());
    for (int k = 0; k < k_max; ++k) {
        const bool last = k == scales() - 1;
        nn::Tensor x = last ? out.residual : interpolate_tokens(out.residual, schedule_.length(k));
        auto found = vq_lookup(x, codebook(k));
        nn::Tensor up = last ? found.z : interpolate_tokens(found.z, top);
        nn::Tensor h = phi_.apply(k, up);
        for (std::size_t i = 0; i < h.size(); ++i) {
            out.residual[i] -= h[i];
            out.f_hat[i] += h[i];
        }
        out.pyramid.scales.push_back(std::move(found.indices));
        out.inputs.push_back(std::move(x));
        out.selected.push_back(std::move(found.z));
    }
    return out;
}

void SatModel::validate_pyramid(const TokenPyramid & pyramid) const {
    require(pyramid.depth() == scales(), "pyramid depth does not match the schedule");
    for (int k = 0; k < scales(); ++k) {
        require(static_cast<int>(pyramid.scales[static_cast<std::size_t>(k)].size()) == schedule_.length(k),
                "pyramid scale " + std::to_string(k + 1) + " length does not match the schedule");
        for (int idx : pyramid.scales[static_cast<std::size_t>(k)]) {
            require(idx >= 0 && idx < vocab(), "token index out of range");
        }
    }
}

nn::Tensor SatModel::msrq_decode(const TokenPyramid & pyramid) const {
    validate_pyramid(pyramid);
    const int top = schedule_.top();
    nn::Tensor f_hat({top, cfg_.latent_dim});
    for (int k = 0; k < scales(); ++k) {
        const bool last = k == scales() - 1;
        nn::Tensor z = gather(codebook(k), pyramid.scales[static_cast<std::size_t>(k)]);
        nn::Tensor h = phi_.apply(k, last ? z : interpolate_tokens(z, top));
        for (std::size_t i = 0; i < h.size(); ++i) {
            f_hat[i] += h[i];
        }
    }
    return f_hat;
}

MsrqTrace SatModel::msrq_train(const nn::Var & f) const {
    MsrqTrace trace;
    trace.result = msrq_encode(f.value());
    const auto & res = trace.result;
    const int top = schedule_.top();
    const bool loss_mode = cfg_.codebook_update == CodebookUpdate::loss;

    nn::Var quantized;
    nn::Var running = f;
    for (int k = 0; k < scales(); ++k) {
        const bool last = k == scales() - 1;
        const auto & z = res.selected[static_cast<std::size_t>(k)];
        trace.inputs.push_back(last ? running : nn::interpolate_rows(running, schedule_.length(k)));
        if (loss_mode) {
            trace.selected.push_back(nn::gather_rows(codebooks_[static_cast<std::size_t>(codebook_index(k))],
                                                     res.pyramid.scales[static_cast<std::size_t>(k)]));
        } else {
            trace.selected.push_back(nn::constant(z));
        }
        nn::Tensor up = last ? z : interpolate_tokens(z, top);
        nn::Var h = phi_.apply(k, nn::constant(up));
        quantized = quantized.defined() ? nn::add(quantized, h) : h;
        if (!last) {
            running = nn::sub(running, nn::constant(h.value()));
        }
    }
    trace.f_hat = nn::add(quantized, nn::sub(f, nn::detach(f)));
    return trace;
}

TokenPyramid SatModel::encode_audio(const dsp::AudioClip & clip) const {
    require(clip.sample_rate == cfg_.sample_rate, "clip sample rate does not match the codec");
    require(static_cast<int>(clip.samples.size()) == cfg_.window_samples(),
            "clip length must equal the codec window (" + std::to_string(cfg_.window_samples()) + " samples)");
    nn::NoGradGuard guard;
    auto f = encode_latent(nn::constant(nn::Tensor({1, cfg_.window_samples()}, clip.samples)));
    return msrq_encode(f.value()).pyramid;
}

dsp::AudioClip SatModel::decode_audio(const TokenPyramid & pyramid) const {
    nn::NoGradGuard guard;
    auto audio = decode_latent(nn::constant(msrq_decode(pyramid))).value();
    dsp::AudioClip clip;
    clip.sample_rate = cfg_.sample_rate;
    clip.samples.assign(audio.values().begin(), audio.values().end());
    for (double & v : clip.samples) {
        v = std::clamp(v, -1.0, 1.0);
    }
    return clip;
}

// ---------------------------------------------------------------- codebook maintenance

void SatModel::init_codebooks_from_latents(const std::vector<nn::Tensor> & latents, nn::Rng & rng) {
    require(!latents.empty(), "codebook init needs latents");
    const int top = schedule_.top();
    const int d = cfg_.latent_dim;
    const int v = vocab();
    std::vector<nn::Tensor> residuals = latents;
    std::vector<char> done(codebooks_.size(), 0);
    for (int k = 0; k < scales(); ++k) {
        const bool last = k == scales() - 1;
        const int c = codebook_index(k);
        std::vector<nn::Tensor> xs;
        for (const auto & r : residuals) {
            xs.push_back(last ? r : interpolate_tokens(r, schedule_.length(k)));
        }
        if (!done[static_cast<std::size_t>(c)]) {
            std::vector<const double *> pool;
            double sq = 0.0;
            for (const auto & x : xs) {
                for (int i = 0; i < x.dim(0); ++i) {
                    pool.push_back(x.data() + static_cast<std::size_t>(i) * d);
                    for (int j = 0; j < d; ++j) {
                        sq += x.at(i, j) * x.at(i, j);
                    }
                }
            }
            const double rms = std::sqrt(sq / (static_cast<double>(pool.size()) * d));
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            std::normal_distribution<double> jitter(0.0, 0.01 * rms + 1e-12);
            nn::Var book = codebooks_[static_cast<std::size_t>(c)];
            nn::Tensor & w = book.mutable_value();
            for (int row = 0; row < v; ++row) {
                const double * src = pool[pick(rng)];
                for (int j = 0; j < d; ++j) {
                    w.at(row, j) = src[j] + jitter(rng);
                }
            }
            ema_.cluster_size[static_cast<std::size_t>(c)].fill(1.0);
            ema_.embed_sum[static_cast<std::size_t>(c)] = w;
            std::fill(ema_.last_used_epoch[static_cast<std::size_t>(c)].begin(),
                      ema_.last_used_epoch[static_cast<std::size_t>(c)].end(), 0);
            done[static_cast<std::size_t>(c)] = 1;
        }
        for (std::size_t i = 0; i < residuals.size(); ++i) {
            auto found = vq_lookup(xs[i], codebook(k));
            nn::Tensor h = phi_.apply(k, last ? found.z : interpolate_tokens(found.z, top));
            for (std::size_t j = 0; j < h.size(); ++j) {
                residuals[i][j] -= h[j];
            }
        }
    }
    ema_.initialised = true;
}

void SatModel::ema_update(const std::vector<MsrqResult> & batch, int epoch) {
    const int d = cfg_.latent_dim;
    const int v = vocab();
    const double decay = cfg_.ema_decay;
    constexpr double eps = 1e-5;
    for (std::size_t c = 0; c < codebooks_.size(); ++c) {
        nn::Tensor counts({v});
        nn::Tensor sums({v, d});
        bool any = false;
        for (const auto & r : batch) {
            for (int k = 0; k < scales(); ++k) {
                if (codebook_index(k) != static_cast<int>(c)) {
                    continue;
                }
                const auto & idx = r.pyramid.scales[static_cast<std::size_t>(k)];
                const auto & x = r.inputs[static_cast<std::size_t>(k)];
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    counts[static_cast<std::size_t>(idx[i])] += 1.0;
                    for (int j = 0; j < d; ++j) {
                        sums.at(idx[i], j) += x.at(static_cast<int>(i), j);
                    }
                    ema_.last_used_epoch[c][static_cast<std::size_t>(idx[i])] = epoch;
                    any = true;
                }
            }
        }
        if (!any) {
            continue;
        }
        auto & cs = ema_.cluster_size[c];
        auto & es = ema_.embed_sum[c];
        double n = 0.0;
        for (int i = 0; i < v; ++i) {
            cs[static_cast<std::size_t>(i)] = decay * cs[static_cast<std::size_t>(i)] + (1.0 - decay) * counts[static_cast<std::size_t>(i)];
            n += cs[static_cast<std::size_t>(i)];
        }
        for (std::size_t i = 0; i < es.size(); ++i) {
            es[i] = decay * es[i] + (1.0 - decay) * sums[i];
        }
        nn::Tensor & w = codebooks_[c].mutable_value();
        for (int i = 0; i < v; ++i) {
            const double smoothed = (cs[static_cast<std::size_t>(i)] + eps) / (n + v * eps) * n;
            for (int j = 0; j < d; ++j) {
                w.at(i, j) = es.at(i, j) / smoothed;
            }
        }
    }
}

int SatModel::ema_reseed_dead_codes(const std::vector<MsrqResult> & batch, int epoch, nn::Rng & rng) {
    const int d = cfg_.latent_dim;
    int reseeded = 0;
    for (std::size_t c = 0; c < codebooks_.size(); ++c) {
        std::vector<const double *> pool;
        for (const auto & r : batch) {
            for (int k = 0; k < scales(); ++k) {
                if (codebook_index(k) != static_cast<int>(c)) {
                    continue;
                }
                const auto & x = r.inputs[static_cast<std::size_t>(k)];
                for (int i = 0; i < x.dim(0); ++i) {
                    pool.push_back(x.data() + static_cast<std::size_t>(i) * d);
                }
            }
        }
        if (pool.empty()) {
            continue;
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        nn::Tensor & w = codebooks_[c].mutable_value();
        for (int i = 0; i < vocab(); ++i) {
            int & last = ema_.last_used_epoch[c][static_cast<std::size_t>(i)];
            if (epoch - last < cfg_.dead_code_epochs) {
                continue;
            }
            const double * src = pool[pick(rng)];
            for (int j = 0; j < d; ++j) {
                w.at(i, j) = src[j];
                ema_.embed_sum[c].at(i, j) = src[j];
            }
            ema_.cluster_size[c][static_cast<std::size_t>(i)] = 1.0;
            last = epoch;
            ++reseeded;
        }
    }
    return reseeded;
}

} // namespace aar::codec
