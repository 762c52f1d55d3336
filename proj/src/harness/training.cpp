#include "aar/harness/training.hpp"

#include "aar/dsp/segment.hpp"
#include "aar/error.hpp"
#include "aar/lm/conditioner.hpp"
#include "aar/loss/discriminator.hpp"
#include "aar/loss/losses.hpp"
#include "aar/metrics/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace aar::harness {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double minutes_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
}

nn::Rng training_rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x7a11u};
    return nn::Rng(seq);
}

std::string section_ini(const ExperimentConfig & cfg, const std::string & section) {
    std::string out;
    for (const auto & f : config_fields()) {
        if (f.section == section) {
            out += f.key + " = " + f.get(cfg) + "\n";
        }
    }
    return out;
}

ExperimentConfig config_from_meta(const Checkpoint & ckpt) {
    ExperimentConfig cfg;
    apply_ini(cfg, ckpt.meta.at("config").get<std::string>(), "checkpoint config");
    validate(cfg);
    return cfg;
}

class JsonlLog {
public:
    JsonlLog(const std::filesystem::path & path, bool append)
        : out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) {
            throw IoError("cannot write " + path.string());
        }
    }
    void write(const json & j) { out_ << j.dump() << '\n' << std::flush; }

private:
    std::ofstream out_;
};

// Replays a JSONL log up to the given step so a resumed run appends to a consistent file.
void truncate_log(const std::filesystem::path & path, int epoch) {
    std::ifstream in(path);
    if (!in) {
        return;
    }
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("epoch", 0) <= epoch) {
            keep.push_back(line);
        }
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto & l : keep) {
        out << l << '\n';
    }
}

struct CodecState {
    std::unique_ptr<codec::SatModel> sat;
    std::unique_ptr<loss::StftDiscriminator> disc;
    std::unique_ptr<nn::Adam> g_opt;
    std::unique_ptr<nn::Adam> cb_opt; // codebooks, loss-driven updates only
    std::unique_ptr<nn::Adam> d_opt;
    nn::Rng rng;
    int epoch = 0;
    long long step = 0;
    double initial_mel = 0.0;
    double best_mel = 0.0;
};

CodecState make_codec_state(const ExperimentConfig & cfg) {
    CodecState s;
    s.sat = std::make_unique<codec::SatModel>(cfg.codec, cfg.stage1.seed);
    const nn::AdamConfig adam{cfg.stage1.beta1, cfg.stage1.beta2, 1e-8, 0.0};
    s.g_opt = std::make_unique<nn::Adam>(s.sat->params(), adam);
    s.cb_opt = std::make_unique<nn::Adam>(s.sat->codebook_store(), adam);
    if (cfg.stage1.weights.lambda_g > 0.0) {
        s.disc = std::make_unique<loss::StftDiscriminator>(cfg.discriminator(), cfg.stage1.seed + 1);
        s.d_opt = std::make_unique<nn::Adam>(s.disc->params(), adam);
    }
    s.rng = training_rng(cfg.stage1.seed);
    return s;
}

void store_ema(Checkpoint & ckpt, const codec::EmaState & ema) {
    for (std::size_t c = 0; c < ema.cluster_size.size(); ++c) {
        const std::string p = "ema." + std::to_string(c);
        ckpt.put(p + ".cluster_size", ema.cluster_size[c]);
        ckpt.put(p + ".embed_sum", ema.embed_sum[c]);
        const auto & used = ema.last_used_epoch[c];
        nn::Tensor t({static_cast<int>(used.size())});
        for (std::size_t i = 0; i < used.size(); ++i) {
            t[i] = used[i];
        }
        ckpt.put(p + ".last_used", t);
    }
    ckpt.meta["ema_initialised"] = ema.initialised;
}

void load_ema(const Checkpoint & ckpt, codec::EmaState & ema) {
    for (std::size_t c = 0; c < ema.cluster_size.size(); ++c) {
        const std::string p = "ema." + std::to_string(c);
        ema.cluster_size[c] = ckpt.array(p + ".cluster_size");
        ema.embed_sum[c] = ckpt.array(p + ".embed_sum");
        const auto & t = ckpt.array(p + ".last_used");
        require(t.size() == ema.last_used_epoch[c].size(), "EMA state does not match the codec");
        for (std::size_t i = 0; i < t.size(); ++i) {
            ema.last_used_epoch[c][i] = static_cast<int>(t[i]);
        }
    }
    ema.initialised = ckpt.meta.at("ema_initialised").get<bool>();
}

Checkpoint codec_checkpoint(const ExperimentConfig & cfg, CodecState & s, double mel) {
    Checkpoint ckpt;
    ckpt.meta["kind"] = "codec";
    ckpt.meta["config"] = to_ini(cfg);
    ckpt.meta["config_hash"] = config_hash(cfg);
    ckpt.meta["schedule"] = s.sat->schedule().lengths;
    ckpt.meta["epoch"] = s.epoch;
    ckpt.meta["step"] = s.step;
    ckpt.meta["mel"] = mel;
    ckpt.meta["initial_mel"] = s.initial_mel;
    ckpt.meta["best_mel"] = s.best_mel;
    ckpt.meta["rng"] = rng_state(s.rng);
    store_params(ckpt, "sat", s.sat->params());
    store_params(ckpt, "sat", s.sat->codebook_store());
    store_ema(ckpt, s.sat->ema());
    store_adam(ckpt, "opt.g", *s.g_opt);
    store_adam(ckpt, "opt.cb", *s.cb_opt);
    if (s.disc) {
        store_params(ckpt, "disc", s.disc->params());
        store_adam(ckpt, "opt.d", *s.d_opt);
    }
    return ckpt;
}

void restore_codec_state(const Checkpoint & ckpt, CodecState & s) {
    load_params(ckpt, "sat", s.sat->params());
    load_params(ckpt, "sat", s.sat->codebook_store());
    load_ema(ckpt, s.sat->ema());
    load_adam(ckpt, "opt.g", *s.g_opt);
    load_adam(ckpt, "opt.cb", *s.cb_opt);
    if (s.disc) {
        load_params(ckpt, "disc", s.disc->params());
        load_adam(ckpt, "opt.d", *s.d_opt);
    }
    restore_rng(s.rng, ckpt.meta.at("rng").get<std::string>());
    s.epoch = ckpt.meta.at("epoch").get<int>();
    s.step = ckpt.meta.at("step").get<long long>();
    s.initial_mel = ckpt.meta.at("initial_mel").get<double>();
    s.best_mel = ckpt.meta.at("best_mel").get<double>();
}

void check_resume(const Checkpoint & ckpt, const ExperimentConfig & cfg, const std::string & kind) {
    if (ckpt.meta.value("kind", "") != kind) {
        throw ValidationError("resume checkpoint is not a " + kind + " checkpoint");
    }
    if (ckpt.meta.value("config_hash", "") != config_hash(cfg)) {
        throw ValidationError("resume checkpoint was written with a different configuration");
    }
}

} // namespace

std::vector<dsp::LabeledClip> corpus_from_config(const ExperimentConfig & cfg) {
    return dsp::synth_corpus(cfg.data.seed, cfg.data.clips, cfg.codec.sample_rate, cfg.data.seconds);
}

std::vector<dsp::AudioClip> codec_windows(const std::vector<dsp::LabeledClip> & clips, const codec::CodecConfig & cfg) {
    std::vector<dsp::AudioClip> out;
    for (const auto & c : clips) {
        require(c.clip.sample_rate == cfg.sample_rate, "corpus sample rate does not match the codec");
        for (auto & w : dsp::segment(c.clip, cfg.window_seconds)) {
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::string config_hash(const ExperimentConfig & cfg) { return sha256_hex(to_ini(cfg)); }

LoadedCodec load_codec(const std::filesystem::path & path) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "codec") {
        throw ValidationError(path.string() + " is not a codec checkpoint");
    }
    LoadedCodec out;
    out.config = config_from_meta(ckpt);
    out.model = std::make_unique<codec::SatModel>(out.config.codec, out.config.stage1.seed);
    load_params(ckpt, "sat", out.model->params());
    load_params(ckpt, "sat", out.model->codebook_store());
    load_ema(ckpt, out.model->ema());
    out.hash = sha256_file(path);
    out.path = path;
    return out;
}

LoadedAar load_aar(const std::filesystem::path & path, const LoadedCodec & codec) {
    const Checkpoint ckpt = read_checkpoint(path);
    if (ckpt.meta.value("kind", "") != "aar") {
        throw ValidationError(path.string() + " is not a transformer checkpoint");
    }
    if (ckpt.meta.at("codec_hash").get<std::string>() != codec.hash) {
        throw ValidationError("transformer " + path.string() + " was trained against a different codec checkpoint");
    }
    if (ckpt.meta.at("schedule").get<std::vector<int>>() != codec.model->schedule().lengths) {
        throw ValidationError("transformer schedule does not match the codec");
    }
    LoadedAar out;
    out.config = config_from_meta(ckpt);
    out.model = std::make_unique<lm::AarModel>(out.config.aar(*codec.model), out.config.stage2.seed);
    load_params(ckpt, "aar", out.model->params());
    out.codec_hash = codec.hash;
    out.path = path;
    return out;
}

double mean_reconstruction_mel(const codec::SatModel & sat, const std::vector<dsp::AudioClip> & windows,
                               const dsp::SpectralConfig & spectral) {
    require(!windows.empty(), "no windows to evaluate");
    double total = 0.0;
    for (const auto & w : windows) {
        total += metrics::mel_distance(w, sat.decode_audio(sat.encode_audio(w)), spectral);
    }
    return total / static_cast<double>(windows.size());
}

Stage1Result train_codec(const ExperimentConfig & cfg, const std::vector<dsp::AudioClip> & windows,
                         const std::filesystem::path & out_dir, const TrainOptions & opts) {
    validate(cfg);
    require(!windows.empty(), "stage-1 training needs at least one window");
    std::filesystem::create_directories(out_dir);
    const auto spectral = cfg.loss_spectral();
    const auto & s1 = cfg.stage1;
    const int n = static_cast<int>(windows.size());
    const int steps_per_epoch = (n + s1.batch - 1) / s1.batch;
    const long long total_steps = static_cast<long long>(steps_per_epoch) * s1.epochs;
    const bool loss_mode = cfg.codec.codebook_update == codec::CodebookUpdate::loss;

    std::vector<nn::Tensor> audio;
    for (const auto & w : windows) {
        require(static_cast<int>(w.size()) == cfg.codec.window_samples(), "window length does not match the codec");
        audio.push_back(dsp::audio_tensor(w));
    }

    Stage1Result result;
    result.best = out_dir / "best.ckpt";
    result.last = out_dir / "last.ckpt";
    const auto log_path = out_dir / "stage1_log.jsonl";
    CodecState s = make_codec_state(cfg);
    if (!opts.resume.empty()) {
        const Checkpoint ckpt = read_checkpoint(opts.resume);
        check_resume(ckpt, cfg, "codec");
        restore_codec_state(ckpt, s);
        truncate_log(log_path, s.epoch);
    }
    JsonlLog log(log_path, !opts.resume.empty());

    if (opts.resume.empty()) {
        std::vector<nn::Tensor> latents;
        {
            nn::NoGradGuard guard;
            for (const auto & a : audio) {
                latents.push_back(s.sat->encode_latent(nn::constant(a)).value());
            }
        }
        s.sat->init_codebooks_from_latents(latents, s.rng);
        s.initial_mel = mean_reconstruction_mel(*s.sat, windows, spectral);
        s.best_mel = s.initial_mel;
        log.write({{"type", "eval"}, {"epoch", 0}, {"step", 0}, {"mel", s.initial_mel}});
        const Checkpoint ckpt = codec_checkpoint(cfg, s, s.initial_mel);
        write_checkpoint(result.best, ckpt);
        write_checkpoint(result.last, ckpt);
        if (opts.progress) {
            *opts.progress << "stage1 epoch 0 mel " << s.initial_mel << '\n';
        }
    }
    result.initial_mel = s.initial_mel;
    result.best_mel = s.best_mel;
    result.final_mel = s.best_mel;

    const auto t0 = Clock::now();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::bernoulli_distribution disc_draw(s1.disc_prob);
    while (s.epoch < s1.epochs) {
        const int epoch = s.epoch + 1;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), s.rng);
        std::vector<codec::MsrqResult> epoch_traces;
        for (int b = 0; b < steps_per_epoch; ++b) {
            const int begin = b * s1.batch;
            const int end = std::min(n, begin + s1.batch);
            const double inv = 1.0 / static_cast<double>(end - begin);
            const double lr = nn::cosine_lr(s.step, total_steps, s1.lr);
            s.sat->params().zero_grad();
            s.sat->codebook_store().zero_grad();
            std::vector<nn::Tensor> fakes;
            std::vector<codec::MsrqResult> traces;
            double parts_sum[6] = {0, 0, 0, 0, 0, 0};
            for (int i = begin; i < end; ++i) {
                const nn::Var a = nn::constant(audio[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
                const nn::Var f = s.sat->encode_latent(a);
                auto trace = s.sat->msrq_train(f);
                const nn::Var a_hat = s.sat->decode_latent(trace.f_hat);
                loss::Stage1Parts parts;
                parts.l_t = loss::loss_time(a, a_hat);
                parts.l_f = loss::loss_freq(a, a_hat, spectral);
                parts.l_g = s.disc ? loss::hinge_generator(s.disc->forward(a_hat)) : nn::constant(nn::Tensor({}, 0.0));
                const auto vq = loss::loss_vq_commit(trace.inputs, trace.selected);
                parts.l_vq = vq.l_vq;
                parts.l_com = vq.l_com;
                const nn::Var total = loss::total_stage1_loss(parts, s1.weights);
                nn::backward(nn::scale(total, inv));
                const double vals[6] = {total.item(), parts.l_t.item(), parts.l_f.item(),
                                        parts.l_g.item(), parts.l_vq.item(), parts.l_com.item()};
                for (int j = 0; j < 6; ++j) {
                    parts_sum[j] += vals[j] * inv;
                }
                fakes.push_back(a_hat.value());
                traces.push_back(std::move(trace.result));
            }
            if (s1.clip_norm > 0.0) {
                nn::clip_grad_norm(s.sat->params(), s1.clip_norm);
            }
            s.g_opt->step(lr);
            if (loss_mode) {
                s.cb_opt->step(lr);
            } else {
                s.sat->ema_update(traces, epoch);
            }
            json entry{{"type", "step"},         {"epoch", epoch},         {"step", s.step + 1},
                       {"lr", lr},               {"loss", parts_sum[0]},   {"l_t", parts_sum[1]},
                       {"l_f", parts_sum[2]},    {"l_g", parts_sum[3]},    {"l_vq", parts_sum[4]},
                       {"l_com", parts_sum[5]}};
            if (s.disc && disc_draw(s.rng)) {
                s.disc->params().zero_grad();
                double l_d = 0.0;
                for (int i = begin; i < end; ++i) {
                    const auto & real = audio[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
                    const auto d = loss::hinge_discriminator(s.disc->forward(nn::constant(real)),
                                                             s.disc->forward(nn::constant(fakes[static_cast<std::size_t>(i - begin)])));
                    if (!std::isfinite(d.item())) {
                        throw DivergenceError("non-finite discriminator loss at step " + std::to_string(s.step + 1));
                    }
                    l_d += d.item() * inv;
                    nn::backward(nn::scale(d, inv));
                }
                s.d_opt->step(lr);
                entry["l_d"] = l_d;
            }
            ++s.step;
            result.step_losses.push_back(parts_sum[0]);
            log.write(entry);
            for (auto & t : traces) {
                epoch_traces.push_back(std::move(t));
            }
        }
        if (!loss_mode) {
            s.sat->ema_reseed_dead_codes(epoch_traces, epoch, s.rng);
        }
        s.epoch = epoch;
        const double mel = mean_reconstruction_mel(*s.sat, windows, spectral);
        if (!std::isfinite(mel)) {
            throw DivergenceError("non-finite mel distance after epoch " + std::to_string(epoch));
        }
        const bool improved = mel < s.best_mel;
        if (improved) {
            s.best_mel = mel;
        }
        log.write({{"type", "eval"}, {"epoch", epoch}, {"step", s.step}, {"mel", mel}, {"best", improved}});
        const Checkpoint ckpt = codec_checkpoint(cfg, s, mel);
        if (improved) {
            write_checkpoint(result.best, ckpt);
        }
        write_checkpoint(result.last, ckpt);
        result.epoch_mel.push_back(mel);
        result.final_mel = mel;
        ++result.epochs_run;
        if (opts.progress) {
            *opts.progress << "stage1 epoch " << epoch << " loss " << result.step_losses.back() << " mel " << mel
                           << (improved ? " (best)" : "") << '\n';
        }
        if (epoch == opts.stop_after_epoch) {
            break;
        }
        if (s1.max_minutes > 0.0 && minutes_since(t0) > s1.max_minutes && s.epoch < s1.epochs) {
            result.budget_exhausted = true;
            break;
        }
    }
    result.best_mel = s.best_mel;
    result.steps = s.step;
    return result;
}

Stage2Data prepare_stage2(const ExperimentConfig & cfg, const codec::SatModel & sat,
                          const std::vector<dsp::AudioClip> & windows) {
    require(!windows.empty(), "stage-2 training needs at least one window");
    Stage2Data data;
    const lm::StubConditioner conditioner(cfg.stage2.cond_dim);
    for (const auto & w : windows) {
        data.pyramids.push_back(sat.encode_audio(w));
        data.conds.push_back(conditioner.embed(w));
        lm::Stage2Example ex;
        ex.sequence = cfg.stage2.mode == lm::AarMode::next_scale
                          ? lm::build_teacher_sequence(data.pyramids.back(), sat, cfg.stage2.cumulative_inputs)
                          : lm::build_token_sequence(data.pyramids.back());
        ex.cond = data.conds.back();
        data.examples.push_back(std::move(ex));
    }
    return data;
}

double eval_cross_entropy(const lm::AarModel & model, const std::vector<lm::Stage2Example> & examples) {
    require(!examples.empty(), "no examples to evaluate");
    nn::NoGradGuard guard;
    double total = 0.0;
    for (const auto & ex : examples) {
        total += model.loss(ex.sequence, model.cond_var(ex.cond)).item();
    }
    return total / static_cast<double>(examples.size());
}

Stage2Result train_aar(const ExperimentConfig & cfg, const LoadedCodec & codec, const std::vector<dsp::AudioClip> & windows,
                       const std::filesystem::path & out_dir, const TrainOptions & opts) {
    validate(cfg);
    if (section_ini(cfg, "codec") != section_ini(codec.config, "codec")) {
        throw ValidationError("codec settings differ from those stored in " + codec.path.string());
    }
    std::filesystem::create_directories(out_dir);
    const auto & s2 = cfg.stage2;
    const codec::SatModel & sat = *codec.model;
    const Stage2Data data = prepare_stage2(cfg, sat, windows);
    const int n = static_cast<int>(data.examples.size());
    const int steps_per_epoch = (n + s2.batch - 1) / s2.batch;
    const long long total_steps = static_cast<long long>(steps_per_epoch) * s2.epochs;

    lm::AarModel model(cfg.aar(sat), s2.seed);
    nn::Adam opt(model.params(), nn::AdamConfig{s2.beta1, s2.beta2, 1e-8, s2.weight_decay});
    nn::Rng rng = training_rng(s2.seed);
    int epoch_done = 0;
    long long step = 0;

    Stage2Result result;
    result.checkpoint = out_dir / "model.ckpt";
    result.last = out_dir / "last.ckpt";
    const auto log_path = out_dir / "stage2_log.jsonl";
    double initial_ce = 0.0;
    if (!opts.resume.empty()) {
        const Checkpoint ckpt = read_checkpoint(opts.resume);
        check_resume(ckpt, cfg, "aar");
        if (ckpt.meta.at("codec_hash").get<std::string>() != codec.hash) {
            throw ValidationError("resume checkpoint was trained against a different codec");
        }
        load_params(ckpt, "aar", model.params());
        load_adam(ckpt, "opt", opt);
        restore_rng(rng, ckpt.meta.at("rng").get<std::string>());
        epoch_done = ckpt.meta.at("epoch").get<int>();
        step = ckpt.meta.at("step").get<long long>();
        initial_ce = ckpt.meta.at("initial_ce").get<double>();
        truncate_log(log_path, epoch_done);
    } else {
        initial_ce = eval_cross_entropy(model, data.examples);
    }
    JsonlLog log(log_path, !opts.resume.empty());
    result.initial_ce = initial_ce;

    auto save = [&](double ce, bool final_model) {
        Checkpoint ckpt;
        ckpt.meta["kind"] = "aar";
        ckpt.meta["config"] = to_ini(cfg);
        ckpt.meta["config_hash"] = config_hash(cfg);
        ckpt.meta["codec_hash"] = codec.hash;
        ckpt.meta["schedule"] = sat.schedule().lengths;
        ckpt.meta["mode"] = lm::to_string(s2.mode);
        ckpt.meta["epoch"] = epoch_done;
        ckpt.meta["step"] = step;
        ckpt.meta["ce"] = ce;
        ckpt.meta["initial_ce"] = initial_ce;
        ckpt.meta["rng"] = rng_state(rng);
        store_params(ckpt, "aar", model.params());
        store_adam(ckpt, "opt", opt);
        write_checkpoint(result.last, ckpt);
        if (final_model) {
            write_checkpoint(result.checkpoint, ckpt);
        }
    };
    if (opts.resume.empty()) {
        log.write({{"type", "eval"}, {"epoch", 0}, {"step", 0}, {"ce", initial_ce}});
        if (opts.progress) {
            *opts.progress << "stage2 epoch 0 ce " << initial_ce << '\n';
        }
        save(initial_ce, s2.epochs == 0);
    }

    const auto t0 = Clock::now();
    std::vector<int> order(static_cast<std::size_t>(n));
    double ce = initial_ce;
    bool finished = epoch_done >= s2.epochs;
    while (epoch_done < s2.epochs) {
        const int epoch = epoch_done + 1;
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (int b = 0; b < steps_per_epoch; ++b) {
            const int begin = b * s2.batch;
            const int end = std::min(n, begin + s2.batch);
            std::vector<lm::Stage2Example> batch;
            for (int i = begin; i < end; ++i) {
                batch.push_back(data.examples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
            }
            const double lr = nn::warmup_linear_lr(step, total_steps, s2.lr, s2.warmup);
            const auto r = lm::train_step_stage2(model, opt, batch, lr, rng, s2.clip_norm);
            ++step;
            epoch_loss += r.loss / steps_per_epoch;
            result.step_losses.push_back(r.loss);
            log.write({{"type", "step"},
                       {"epoch", epoch},
                       {"step", step},
                       {"lr", lr},
                       {"ce", r.loss},
                       {"grad_norm", r.grad_norm},
                       {"dropped", r.dropped}});
        }
        epoch_done = epoch;
        ce = eval_cross_entropy(model, data.examples);
        if (!std::isfinite(ce)) {
            throw DivergenceError("non-finite cross-entropy after epoch " + std::to_string(epoch));
        }
        result.epoch_ce.push_back(ce);
        ++result.epochs_run;
        log.write({{"type", "eval"}, {"epoch", epoch}, {"step", step}, {"train_ce", epoch_loss}, {"ce", ce}});
        if (opts.progress) {
            *opts.progress << "stage2 epoch " << epoch << " train " << epoch_loss << " ce " << ce << '\n';
        }
        finished = epoch_done >= s2.epochs;
        const bool stop = epoch == opts.stop_after_epoch;
        const bool out_of_time = s2.max_minutes > 0.0 && minutes_since(t0) > s2.max_minutes && !finished;
        result.budget_exhausted = out_of_time;
        save(ce, finished || out_of_time);
        if (stop || out_of_time) {
            break;
        }
    }
    if (finished && !std::filesystem::exists(result.checkpoint)) {
        save(ce, true);
    }
    result.final_ce = ce;
    result.steps = step;
    return result;
}

} // namespace aar::harness
