#include "aar/harness/cli.hpp"

#include "aar/codec/quantize.hpp"
#include "aar/dsp/segment.hpp"
#include "aar/dsp/wav.hpp"
#include "aar/error.hpp"
#include "aar/gen/generate.hpp"
#include "aar/harness/training.hpp"
#include "aar/lm/conditioner.hpp"
#include "aar/metrics/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#ifndef AAR_VERSION
#define AAR_VERSION "unknown"
#endif

namespace aar::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

struct CommonOptions {
    std::string preset;
    std::string config;
    std::string run_name;
    std::vector<std::pair<const ConfigField *, std::string>> overrides;
    bool quiet = false;
};

void add_common(CLI::App & cmd, CommonOptions & o) {
    cmd.add_option("--preset", o.preset, "configuration preset (paper-1s-16scale-quadratic, desk-tiny)");
    cmd.add_option("--config", o.config, "INI file applied on top of the preset")->check(CLI::ExistingFile);
    cmd.add_option("--run-name", o.run_name, "run directory name under $" + std::string(kRunRootEnv));
    cmd.add_flag("--quiet", o.quiet, "suppress progress output");
    for (const auto & f : config_fields()) {
        const ConfigField * field = &f;
        cmd.add_option_function<std::string>(
               "--" + f.name(), [&o, field](const std::string & v) { o.overrides.emplace_back(field, v); }, f.help)
            ->group("Config overrides");
    }
}

ExperimentConfig resolve_config(const CommonOptions & o, const ExperimentConfig * stored) {
    ExperimentConfig cfg = !o.preset.empty() ? preset(o.preset) : stored ? *stored : preset("desk-tiny");
    if (!o.config.empty()) {
        cfg = load_config(o.config, cfg);
    }
    for (const auto & [field, value] : o.overrides) {
        field->set(cfg, value);
    }
    validate(cfg);
    return cfg;
}

fs::path run_root() {
    const char * env = std::getenv(kRunRootEnv);
    return env && *env ? fs::path(env) : fs::path("runs");
}

json seeds_of(const ExperimentConfig & cfg) {
    return {{"data", cfg.data.seed},
            {"stage1", cfg.stage1.seed},
            {"stage2", cfg.stage2.seed},
            {"sampler", cfg.sampler.seed},
            {"bench", cfg.bench.seed}};
}

fs::path open_run(const std::string & command, const CommonOptions & o, const ExperimentConfig & cfg,
                  const std::vector<std::string> & args, const json & inputs = json::object()) {
    const std::string hash = config_hash(cfg);
    const std::string name = o.run_name.empty() ? command + "-" + hash.substr(0, 12) : o.run_name;
    const fs::path dir = run_root() / name;
    fs::create_directories(dir);
    {
        std::ofstream ini(dir / "config.ini");
        ini << to_ini(cfg);
    }
    json run{{"command", command}, {"args", args},       {"version", AAR_VERSION},
             {"config_hash", hash}, {"seeds", seeds_of(cfg)}, {"inputs", inputs}};
    std::ofstream(dir / "run.json") << run.dump(2) << '\n';
    return dir;
}

void write_json(const fs::path & path, const json & j) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

void require_file(const std::string & path, const std::string & what) {
    if (path.empty()) {
        throw UsageError(what + " is required");
    }
    if (!fs::exists(path)) {
        throw UsageError(what + " not found: " + path);
    }
}

std::vector<dsp::LabeledClip> corpus_clips(const std::string & manifest, const ExperimentConfig & cfg) {
    if (manifest.empty()) {
        return corpus_from_config(cfg);
    }
    require_file(manifest, "corpus manifest");
    return dsp::load_manifest_clips(manifest);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string cfg_tag(double s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s;
    return os.str();
}

// ---------------------------------------------------------------- commands

int cmd_make_corpus(const CommonOptions & o, const std::vector<std::string> & args, std::ostream & out) {
    const ExperimentConfig cfg = resolve_config(o, nullptr);
    const fs::path dir = open_run("make-corpus", o, cfg, args);
    const auto clips = corpus_from_config(cfg);
    std::vector<dsp::ManifestEntry> entries;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        std::ostringstream name;
        name << "clip_" << std::setw(4) << std::setfill('0') << i << '_' << dsp::synth_class_name(clips[i].label_id)
             << ".wav";
        dsp::save_wav(dir / "clips" / name.str(), clips[i].clip, dsp::WavEncoding::float32);
        entries.push_back({"clips/" + name.str(), clips[i].label_id, clips[i].clip.seconds(), clips[i].clip.sample_rate});
    }
    dsp::write_manifest(dir / "manifest.jsonl", entries);
    out << (dir / "manifest.jsonl").string() << '\n';
    return exit_ok;
}

int cmd_train_codec(const CommonOptions & o, const std::string & corpus, const std::string & resume,
                    const std::vector<std::string> & args, std::ostream & out) {
    std::optional<ExperimentConfig> stored;
    if (!resume.empty()) {
        require_file(resume, "resume checkpoint");
        const auto ckpt = read_checkpoint(resume);
        ExperimentConfig c;
        apply_ini(c, ckpt.meta.at("config").get<std::string>(), "checkpoint config");
        stored = c;
    }
    const ExperimentConfig cfg = resolve_config(o, stored ? &*stored : nullptr);
    const fs::path dir = open_run("train-codec", o, cfg, args, {{"corpus", corpus}, {"resume", resume}});
    const auto windows = codec_windows(corpus_clips(corpus, cfg), cfg.codec);
    TrainOptions opts;
    opts.resume = resume;
    opts.progress = o.quiet ? nullptr : &out;
    const auto r = train_codec(cfg, windows, dir, opts);
    write_json(dir / "summary.json", {{"initial_mel", r.initial_mel},
                                      {"best_mel", r.best_mel},
                                      {"final_mel", r.final_mel},
                                      {"best_ratio", r.best_mel / r.initial_mel},
                                      {"epochs_run", r.epochs_run},
                                      {"steps", r.steps},
                                      {"budget_exhausted", r.budget_exhausted},
                                      {"checkpoint", r.best.string()}});
    out << r.best.string() << '\n';
    return exit_ok;
}

int cmd_train_aar(const CommonOptions & o, const std::string & codec_path, const std::string & corpus,
                  const std::string & resume, const std::vector<std::string> & args, std::ostream & out) {
    require_file(codec_path, "--codec checkpoint");
    const LoadedCodec codec = load_codec(codec_path);
    std::optional<ExperimentConfig> stored = codec.config;
    if (!resume.empty()) {
        require_file(resume, "resume checkpoint");
        const auto ckpt = read_checkpoint(resume);
        ExperimentConfig c;
        apply_ini(c, ckpt.meta.at("config").get<std::string>(), "checkpoint config");
        stored = c;
    }
    const ExperimentConfig cfg = resolve_config(o, &*stored);
    const fs::path dir =
        open_run("train-aar", o, cfg, args, {{"codec", codec_path}, {"codec_hash", codec.hash}, {"corpus", corpus}});
    const auto windows = codec_windows(corpus_clips(corpus, cfg), cfg.codec);
    TrainOptions opts;
    opts.resume = resume;
    opts.progress = o.quiet ? nullptr : &out;
    const auto r = train_aar(cfg, codec, windows, dir, opts);
    write_json(dir / "summary.json", {{"initial_ce", r.initial_ce},
                                      {"final_ce", r.final_ce},
                                      {"epochs_run", r.epochs_run},
                                      {"steps", r.steps},
                                      {"budget_exhausted", r.budget_exhausted},
                                      {"codec_hash", codec.hash},
                                      {"checkpoint", r.checkpoint.string()}});
    out << r.checkpoint.string() << '\n';
    return exit_ok;
}

int cmd_reconstruct(const CommonOptions & o, const std::string & codec_path, const std::vector<std::string> & inputs,
                    const std::vector<std::string> & args, std::ostream & out) {
    require_file(codec_path, "--codec checkpoint");
    if (inputs.empty()) {
        throw UsageError("at least one --input WAV is required");
    }
    for (const auto & in : inputs) {
        require_file(in, "input");
    }
    const LoadedCodec codec = load_codec(codec_path);
    const ExperimentConfig cfg = resolve_config(o, &codec.config);
    const fs::path dir = open_run("reconstruct", o, cfg, args, {{"codec", codec_path}, {"codec_hash", codec.hash}});
    const auto spectral = cfg.loss_spectral();
    json report = json::array();
    for (const auto & in : inputs) {
        const dsp::AudioClip clip = dsp::load_wav(in);
        std::vector<codec::TokenPyramid> pyramids;
        const dsp::AudioClip rec = metrics::reconstruct_clip(*codec.model, clip, &pyramids);
        const std::string stem = fs::path(in).stem().string();
        dsp::save_wav(dir / (stem + ".recon.wav"), rec);
        for (std::size_t w = 0; w < pyramids.size(); ++w) {
            codec::write_pyramid(dir / (stem + ".w" + std::to_string(w) + ".satp"), pyramids[w], codec.model->vocab());
        }
        const double mel = metrics::mel_distance(clip, rec, spectral);
        const double stft = metrics::stft_distance(clip, rec, spectral);
        report.push_back({{"input", in},
                          {"output", (dir / (stem + ".recon.wav")).string()},
                          {"input_seconds", clip.seconds()},
                          {"output_seconds", rec.seconds()},
                          {"windows", pyramids.size()},
                          {"mel", mel},
                          {"stft", stft}});
        out << stem << " seconds " << rec.seconds() << " mel " << fmt(mel) << " stft " << fmt(stft) << '\n';
    }
    write_json(dir / "reconstruct.json", report);
    return exit_ok;
}

struct GenerateArgs {
    std::string codec;
    std::string aar;
    std::string corpus;
    std::vector<std::string> cond_wavs;
    std::string cfg_sweep;
    int count = 4;
};

int cmd_generate(const CommonOptions & o, const GenerateArgs & g, const std::vector<std::string> & args,
                 std::ostream & out) {
    require_file(g.codec, "--codec checkpoint");
    require_file(g.aar, "--aar checkpoint");
    for (const auto & w : g.cond_wavs) {
        require_file(w, "--cond WAV");
    }
    const LoadedCodec codec = load_codec(g.codec);
    const LoadedAar aar = load_aar(g.aar, codec);
    const ExperimentConfig cfg = resolve_config(o, &aar.config);
    const std::vector<double> scales = g.cfg_sweep.empty() ? std::vector<double>{cfg.sampler.cfg_scale}
                                                           : parse_cfg_sweep(g.cfg_sweep);
    const fs::path dir = open_run("generate", o, cfg, args,
                                  {{"codec", g.codec}, {"aar", g.aar}, {"codec_hash", codec.hash}, {"cfg", scales}});

    std::vector<dsp::AudioClip> targets;
    if (!g.cond_wavs.empty()) {
        for (const auto & w : g.cond_wavs) {
            auto segs = dsp::segment(dsp::load_wav(w), cfg.codec.window_seconds);
            targets.push_back(segs.front());
        }
    } else {
        require(g.count >= 1, "--count must be >= 1");
        auto windows = codec_windows(corpus_clips(g.corpus, cfg), cfg.codec);
        require(!windows.empty(), "empty corpus");
        for (int i = 0; i < g.count; ++i) {
            targets.push_back(windows[static_cast<std::size_t>(i) % windows.size()]);
        }
    }
    const lm::StubConditioner conditioner(aar.model->config().cond_dim);
    std::vector<nn::Tensor> conds;
    nn::Tensor target_emb({static_cast<int>(targets.size()), conditioner.dim()});
    for (std::size_t i = 0; i < targets.size(); ++i) {
        conds.push_back(conditioner.embed(targets[i]));
        for (int j = 0; j < conditioner.dim(); ++j) {
            target_emb.at(static_cast<int>(i), j) = conds.back()[static_cast<std::size_t>(j)];
        }
    }

    const auto spectral = cfg.loss_spectral();
    const bool next_scale = aar.model->config().mode == lm::AarMode::next_scale;
    std::ofstream csv(dir / "generate.csv");
    csv << "cfg_scale,samples,mean_mel,mean_stft,frechet,frechet_degenerate,forward_passes,gen_seconds\n";
    std::ofstream jsonl(dir / "generate.jsonl");
    out << "cfg_scale samples mean_mel mean_stft frechet\n";
    for (const double s : scales) {
        gen::SamplerConfig sc = cfg.sampler;
        sc.cfg_scale = s;
        double mel = 0.0;
        double stft = 0.0;
        double secs = 0.0;
        int passes = 0;
        nn::Tensor gen_emb({static_cast<int>(targets.size()), conditioner.dim()});
        for (std::size_t i = 0; i < targets.size(); ++i) {
            sc.seed = cfg.sampler.seed + i;
            const auto r = next_scale ? gen::generate_next_scale(*aar.model, *codec.model, conds[i], sc)
                                      : gen::generate_next_token(*aar.model, *codec.model, conds[i], sc);
            const std::string stem = "cfg" + cfg_tag(s) + "_" + std::to_string(i);
            dsp::save_wav(dir / (stem + ".wav"), r.clip);
            codec::write_pyramid(dir / (stem + ".satp"), r.pyramid, codec.model->vocab());
            mel += metrics::mel_distance(targets[i], r.clip, spectral) / static_cast<double>(targets.size());
            stft += metrics::stft_distance(targets[i], r.clip, spectral) / static_cast<double>(targets.size());
            secs += r.report.wall_seconds;
            passes = r.report.forward_passes;
            const auto e = conditioner.embed(r.clip);
            for (int j = 0; j < conditioner.dim(); ++j) {
                gen_emb.at(static_cast<int>(i), j) = e[static_cast<std::size_t>(j)];
            }
        }
        double fd = std::nan("");
        bool degenerate = true;
        if (targets.size() >= 2) {
            const auto f = metrics::frechet_distance({gen_emb, "generated"}, {target_emb, "targets"});
            fd = f.value;
            degenerate = f.degenerate;
        }
        csv << s << ',' << targets.size() << ',' << mel << ',' << stft << ',' << fd << ',' << (degenerate ? 1 : 0)
            << ',' << passes << ',' << secs << '\n';
        jsonl << json{{"cfg_scale", s},
                      {"samples", targets.size()},
                      {"mean_mel", mel},
                      {"mean_stft", stft},
                      {"frechet", std::isfinite(fd) ? json(fd) : json(nullptr)},
                      {"frechet_degenerate", degenerate},
                      {"forward_passes", passes},
                      {"gen_seconds", secs}}
                     .dump()
              << '\n';
        out << s << ' ' << targets.size() << ' ' << fmt(mel) << ' ' << fmt(stft) << ' ' << fmt(fd) << '\n';
    }
    return exit_ok;
}

struct BenchArgs {
    std::string codec;
    std::string aar;
    std::string baseline;
    bool decode = false;
};

int cmd_bench(const CommonOptions & o, const BenchArgs & b, const std::vector<std::string> & args, std::ostream & out) {
    const bool trained = !b.codec.empty() || !b.aar.empty() || !b.baseline.empty();
    std::unique_ptr<codec::SatModel> sat;
    std::unique_ptr<lm::AarModel> aar;
    std::unique_ptr<lm::AarModel> baseline;
    ExperimentConfig cfg;
    json inputs = json::object();
    if (trained) {
        require_file(b.codec, "--codec checkpoint");
        require_file(b.aar, "--aar checkpoint");
        require_file(b.baseline, "--baseline checkpoint");
        LoadedCodec codec = load_codec(b.codec);
        LoadedAar a = load_aar(b.aar, codec);
        LoadedAar t = load_aar(b.baseline, codec);
        require(a.model->config().mode == lm::AarMode::next_scale, "--aar must be a next_scale model");
        require(t.model->config().mode == lm::AarMode::next_token, "--baseline must be a next_token model");
        cfg = resolve_config(o, &a.config);
        inputs = {{"codec", b.codec}, {"aar", b.aar}, {"baseline", b.baseline}, {"codec_hash", codec.hash}};
        sat = std::move(codec.model);
        aar = std::move(a.model);
        baseline = std::move(t.model);
    } else {
        cfg = resolve_config(o, nullptr);
        codec::CodecConfig cc = cfg.codec;
        cc.schedule_kind = codec::ScheduleKind::explicit_list;
        cc.explicit_lengths = cfg.bench.lengths;
        cc.scales = static_cast<int>(cfg.bench.lengths.size());
        sat = std::make_unique<codec::SatModel>(cc, cfg.bench.seed + 2);
        ExperimentConfig scaled = cfg;
        scaled.stage2.mode = lm::AarMode::next_scale;
        aar = std::make_unique<lm::AarModel>(scaled.aar(*sat), cfg.bench.seed);
        scaled.stage2.mode = lm::AarMode::next_token;
        baseline = std::make_unique<lm::AarModel>(scaled.aar(*sat), cfg.bench.seed + 1);
        inputs = {{"models", "initialised"}};
    }
    const fs::path dir = open_run("bench", o, cfg, args, inputs);
    const lm::StubConditioner conditioner(aar->config().cond_dim);
    std::vector<nn::Tensor> conds;
    ExperimentConfig corpus_cfg = cfg;
    corpus_cfg.data.clips = std::min(cfg.data.clips, 8);
    for (const auto & w : codec_windows(corpus_from_config(corpus_cfg), cfg.codec)) {
        conds.push_back(conditioner.embed(w));
    }
    gen::SamplerConfig sc = cfg.sampler;
    sc.seed = cfg.bench.seed;
    const auto summary = gen::bench_compare(*aar, *baseline, *sat, conds, cfg.bench.samples, sc, b.decode);
    gen::write_bench_jsonl(dir / "bench.jsonl", summary);
    gen::write_bench_svg(dir / "bench.svg", summary);
    write_json(dir / "bench_summary.json",
               {{"samples", summary.samples},
                {"tokens", summary.tokens},
                {"params_next_scale", aar->params().count()},
                {"params_next_token", baseline->params().count()},
                {"median_passes_next_scale", summary.median_passes_next_scale},
                {"median_passes_next_token", summary.median_passes_next_token},
                {"median_wall_next_scale", summary.median_wall_next_scale},
                {"median_wall_next_token", summary.median_wall_next_token},
                {"pass_ratio", summary.pass_ratio},
                {"wall_ratio", summary.wall_ratio}});
    out << "method forward_passes median_seconds params\n";
    out << "next_scale " << summary.median_passes_next_scale << ' ' << fmt(summary.median_wall_next_scale) << ' '
        << aar->params().count() << '\n';
    out << "next_token " << summary.median_passes_next_token << ' ' << fmt(summary.median_wall_next_token) << ' '
        << baseline->params().count() << '\n';
    out << "pass_ratio " << fmt(summary.pass_ratio) << " wall_ratio " << fmt(summary.wall_ratio) << '\n';
    return exit_ok;
}

struct EvalArgs {
    std::string codec;
    std::string aar;
    std::string corpus;
    std::string generated;
};

int cmd_eval(const CommonOptions & o, const EvalArgs & e, const std::vector<std::string> & args, std::ostream & out) {
    require_file(e.codec, "--codec checkpoint");
    const LoadedCodec codec = load_codec(e.codec);
    std::optional<LoadedAar> aar;
    if (!e.aar.empty()) {
        require_file(e.aar, "--aar checkpoint");
        aar = load_aar(e.aar, codec);
    }
    if (!e.generated.empty() && !fs::is_directory(e.generated)) {
        throw UsageError("--generated must be a directory of WAV files: " + e.generated);
    }
    const ExperimentConfig cfg = resolve_config(o, aar ? &aar->config : &codec.config);
    const fs::path dir = open_run("eval", o, cfg, args, {{"codec", e.codec}, {"aar", e.aar}, {"codec_hash", codec.hash}});
    const auto clips = corpus_clips(e.corpus, cfg);
    std::vector<dsp::AudioClip> audio;
    for (const auto & c : clips) {
        audio.push_back(c.clip);
    }
    const auto report = metrics::eval_reconstruction(*codec.model, audio, cfg.loss_spectral());
    json j{{"clips", audio.size()},
           {"mean_mel", report.mean_mel},
           {"mean_stft", report.mean_stft},
           {"total_tokens", report.total_tokens},
           {"utilization", report.utilization}};
    out << "reconstruction mean_mel " << fmt(report.mean_mel) << " mean_stft " << fmt(report.mean_stft) << '\n';
    if (aar) {
        ExperimentConfig stage2_cfg = cfg;
        stage2_cfg.stage2 = aar->config.stage2;
        const auto data = prepare_stage2(stage2_cfg, *codec.model, codec_windows(clips, cfg.codec));
        const double ce = eval_cross_entropy(*aar->model, data.examples);
        j["cross_entropy"] = ce;
        out << "cross_entropy " << fmt(ce) << '\n';
    }
    if (!e.generated.empty()) {
        const int dim = aar ? aar->model->config().cond_dim : cfg.stage2.cond_dim;
        const lm::StubConditioner conditioner(dim);
        std::vector<fs::path> files;
        for (const auto & entry : fs::directory_iterator(e.generated)) {
            if (entry.path().extension() == ".wav") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        require(files.size() >= 2, "--generated needs at least two WAV files");
        nn::Tensor gen({static_cast<int>(files.size()), dim});
        for (std::size_t i = 0; i < files.size(); ++i) {
            const auto v = conditioner.embed(dsp::load_wav(files[i]));
            for (int k = 0; k < dim; ++k) {
                gen.at(static_cast<int>(i), k) = v[static_cast<std::size_t>(k)];
            }
        }
        nn::Tensor ref({static_cast<int>(audio.size()), dim});
        for (std::size_t i = 0; i < audio.size(); ++i) {
            const auto v = conditioner.embed(audio[i]);
            for (int k = 0; k < dim; ++k) {
                ref.at(static_cast<int>(i), k) = v[static_cast<std::size_t>(k)];
            }
        }
        const auto fd = metrics::frechet_distance({gen, "generated"}, {ref, "corpus"});
        j["frechet"] = fd.value;
        j["frechet_degenerate"] = fd.degenerate;
        out << "frechet " << fmt(fd.value) << (fd.degenerate ? " (degenerate covariance)" : "") << '\n';
    }
    write_json(dir / "eval.json", j);
    return exit_ok;
}

} // namespace

std::vector<double> parse_cfg_sweep(const std::string & spec) {
    auto number = [&](const std::string & s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == s.size() && std::isfinite(v)) {
                return v;
            }
        } catch (const std::exception &) {
        }
        throw ValidationError("bad guidance sweep '" + spec + "'");
    };
    std::vector<double> out;
    if (spec.find(':') != std::string::npos) {
        std::vector<double> parts;
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ':')) {
            parts.push_back(number(item));
        }
        require(parts.size() == 3 && parts[2] > 0.0 && parts[1] >= parts[0], "guidance sweep must be start:stop:step");
        const long long n = static_cast<long long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
        for (long long i = 0; i <= n; ++i) {
            out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
        }
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ',')) {
            out.push_back(number(item));
        }
    }
    require(!out.empty(), "empty guidance sweep");
    for (double s : out) {
        require(s >= 0.0, "guidance scales must be >= 0");
    }
    return out;
}

int run_cli(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    CLI::App app{"Next-scale audio generation: codec training, transformer training, generation and benchmarks", "aar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", AAR_VERSION);

    CommonOptions common;
    std::string corpus;
    std::string resume;
    std::string codec_path;
    std::vector<std::string> inputs;
    GenerateArgs gen_args;
    BenchArgs bench_args;
    EvalArgs eval_args;

    auto * make_corpus = app.add_subcommand("make-corpus", "write the synthetic corpus as WAV files plus a manifest");
    auto * train_codec_cmd = app.add_subcommand("train-codec", "train the multi-scale codec (stage 1)");
    auto * train_aar_cmd = app.add_subcommand("train-aar", "train the transformer on frozen codec tokens (stage 2)");
    auto * reconstruct = app.add_subcommand("reconstruct", "encode and decode WAV files of any length");
    auto * generate = app.add_subcommand("generate", "generate audio, optionally sweeping the guidance scale");
    auto * bench = app.add_subcommand("bench", "time next-scale against next-token generation");
    auto * eval = app.add_subcommand("eval", "reconstruction metrics, cross-entropy and Frechet distance");
    for (auto * cmd : {make_corpus, train_codec_cmd, train_aar_cmd, reconstruct, generate, bench, eval}) {
        add_common(*cmd, common);
    }
    for (auto * cmd : {train_codec_cmd, train_aar_cmd}) {
        cmd->add_option("--corpus", corpus, "corpus manifest (default: synthesize from the data section)");
        cmd->add_option("--resume", resume, "last.ckpt of an interrupted run");
    }
    train_aar_cmd->add_option("--codec", codec_path, "codec checkpoint")->required();
    reconstruct->add_option("--codec", codec_path, "codec checkpoint")->required();
    reconstruct->add_option("--input", inputs, "WAV file(s) to reconstruct")->required();
    generate->add_option("--codec", gen_args.codec, "codec checkpoint")->required();
    generate->add_option("--aar", gen_args.aar, "transformer checkpoint")->required();
    generate->add_option("--cond", gen_args.cond_wavs, "conditioning WAV file(s)");
    generate->add_option("--corpus", gen_args.corpus, "corpus manifest supplying conditioning windows");
    generate->add_option("--count", gen_args.count, "number of corpus windows used as conditions");
    generate->add_option("--cfg", gen_args.cfg_sweep, "guidance scale(s): value, list a,b,c or range start:stop:step");
    bench->add_option("--codec", bench_args.codec, "codec checkpoint (default: initialised models)");
    bench->add_option("--aar", bench_args.aar, "next-scale transformer checkpoint");
    bench->add_option("--baseline", bench_args.baseline, "next-token transformer checkpoint");
    bench->add_flag("--decode", bench_args.decode, "also time the codec decoder");
    eval->add_option("--codec", eval_args.codec, "codec checkpoint")->required();
    eval->add_option("--aar", eval_args.aar, "transformer checkpoint");
    eval->add_option("--corpus", eval_args.corpus, "corpus manifest");
    eval->add_option("--generated", eval_args.generated, "directory of generated WAV files");

    std::vector<std::string> argv_store = args;
    std::vector<char *> argv;
    for (auto & a : argv_store) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::CallForVersion &) {
        out << AAR_VERSION << '\n';
        return exit_ok;
    } catch (const CLI::ParseError & e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    const std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
    try {
        if (make_corpus->parsed()) {
            return cmd_make_corpus(common, rest, out);
        }
        if (train_codec_cmd->parsed()) {
            return cmd_train_codec(common, corpus, resume, rest, out);
        }
        if (train_aar_cmd->parsed()) {
            return cmd_train_aar(common, codec_path, corpus, resume, rest, out);
        }
        if (reconstruct->parsed()) {
            return cmd_reconstruct(common, codec_path, inputs, rest, out);
        }
        if (generate->parsed()) {
            return cmd_generate(common, gen_args, rest, out);
        }
        if (bench->parsed()) {
            return cmd_bench(common, bench_args, rest, out);
        }
        return cmd_eval(common, eval_args, rest, out);
    } catch (const UsageError & e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const IoError & e) {
        err << "input error: " << e.what() << '\n';
        return exit_usage;
    } catch (const ValidationError & e) {
        err << "validation error: " << e.what() << '\n';
        return exit_validation;
    } catch (const FormatError & e) {
        err << "validation error: " << e.what() << '\n';
        return exit_validation;
    } catch (const DivergenceError & e) {
        err << "divergence: " << e.what() << '\n';
        return exit_divergence;
    } catch (const std::exception & e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
}

int run_cli(int argc, char ** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace aar::harness
