#include "aar/harness/config.hpp"

#include "aar/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace aar::harness {

namespace {

std::string trim(const std::string & s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

long long parse_int(const std::string & v, const std::string & what) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) {
            return x;
        }
    } catch (const std::exception &) {
    }
    throw ValidationError(what + ": expected an integer, got '" + v + "'");
}

double parse_double(const std::string & v, const std::string & what) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) {
            return x;
        }
    } catch (const std::exception &) {
    }
    throw ValidationError(what + ": expected a number, got '" + v + "'");
}

bool parse_bool(const std::string & v, const std::string & what) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw ValidationError(what + ": expected true or false, got '" + v + "'");
}

std::vector<int> parse_list(const std::string & v, const std::string & what) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(static_cast<int>(parse_int(item, what)));
        }
    }
    return out;
}

std::string fmt_list(const std::vector<int> & v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += (i ? "," : "") + std::to_string(v[i]);
    }
    return s;
}

template <typename T>
ConfigField int_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part, int T::*member) {
    const std::string name = section + "." + key;
    return {section, key, help, [=](const ExperimentConfig & c) { return std::to_string(c.*part.*member); },
            [=](ExperimentConfig & c, const std::string & v) { c.*part.*member = static_cast<int>(parse_int(v, name)); }};
}

template <typename T>
ConfigField seed_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part,
                       std::uint64_t T::*member) {
    const std::string name = section + "." + key;
    return {section, key, help, [=](const ExperimentConfig & c) { return std::to_string(c.*part.*member); },
            [=](ExperimentConfig & c, const std::string & v) {
                try {
                    std::size_t used = 0;
                    const auto x = std::stoull(v, &used);
                    if (used == v.size() && v.find('-') == std::string::npos) {
                        c.*part.*member = x;
                        return;
                    }
                } catch (const std::exception &) {
                }
                throw ValidationError(name + ": expected a non-negative integer, got '" + v + "'");
            }};
}

template <typename T>
ConfigField real_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part,
                       double T::*member) {
    const std::string name = section + "." + key;
    return {section, key, help, [=](const ExperimentConfig & c) { return fmt_double(c.*part.*member); },
            [=](ExperimentConfig & c, const std::string & v) { c.*part.*member = parse_double(v, name); }};
}

template <typename T>
ConfigField bool_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part, bool T::*member) {
    const std::string name = section + "." + key;
    return {section, key, help, [=](const ExperimentConfig & c) { return std::string(c.*part.*member ? "true" : "false"); },
            [=](ExperimentConfig & c, const std::string & v) { c.*part.*member = parse_bool(v, name); }};
}

template <typename T>
ConfigField list_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part,
                       std::vector<int> T::*member) {
    const std::string name = section + "." + key;
    return {section, key, help, [=](const ExperimentConfig & c) { return fmt_list(c.*part.*member); },
            [=](ExperimentConfig & c, const std::string & v) { c.*part.*member = parse_list(v, name); }};
}

template <typename T, typename E>
ConfigField enum_field(std::string section, std::string key, std::string help, T ExperimentConfig::*part, E T::*member,
                       std::string (*to_s)(E), E (*parse)(const std::string &)) {
    return {section, key, help, [=](const ExperimentConfig & c) { return to_s(c.*part.*member); },
            [=](ExperimentConfig & c, const std::string & v) { c.*part.*member = parse(v); }};
}

ConfigField weight_field(std::string key, std::string help, double loss::LossWeights::*member) {
    const std::string name = "stage1." + key;
    return {"stage1", key, help, [=](const ExperimentConfig & c) { return fmt_double(c.stage1.weights.*member); },
            [=](ExperimentConfig & c, const std::string & v) { c.stage1.weights.*member = parse_double(v, name); }};
}

std::vector<ConfigField> build_fields() {
    using E = ExperimentConfig;
    using codec::CodecConfig;
    std::vector<ConfigField> f;
    f.push_back(seed_field("data", "seed", "synthetic corpus seed", &E::data, &DataConfig::seed));
    f.push_back(int_field("data", "clips", "synthetic corpus size", &E::data, &DataConfig::clips));
    f.push_back(real_field("data", "seconds", "synthetic clip length in seconds", &E::data, &DataConfig::seconds));

    f.push_back(int_field("codec", "sample_rate", "audio sample rate (Hz)", &E::codec, &CodecConfig::sample_rate));
    f.push_back(real_field("codec", "window_seconds", "codec window length (s)", &E::codec, &CodecConfig::window_seconds));
    f.push_back(list_field("codec", "strides", "encoder downsampling strides", &E::codec, &CodecConfig::strides));
    f.push_back(int_field("codec", "channels", "encoder width before downsampling", &E::codec, &CodecConfig::channels));
    f.push_back(int_field("codec", "residual_units", "residual units per block", &E::codec, &CodecConfig::residual_units));
    f.push_back(int_field("codec", "latent_dim", "latent dimension d", &E::codec, &CodecConfig::latent_dim));
    f.push_back(int_field("codec", "codebook_size", "codebook entries V", &E::codec, &CodecConfig::codebook_size));
    f.push_back(enum_field("codec", "schedule", "linear | quadratic | logarithmic | explicit", &E::codec,
                           &CodecConfig::schedule_kind, &codec::to_string, &codec::parse_schedule_kind));
    f.push_back(int_field("codec", "scales", "number of scales K", &E::codec, &CodecConfig::scales));
    f.push_back(list_field("codec", "explicit_lengths", "scale lengths for the explicit schedule", &E::codec,
                           &CodecConfig::explicit_lengths));
    f.push_back(real_field("codec", "gamma", "phi blend ratio", &E::codec, &CodecConfig::gamma));
    f.push_back(enum_field("codec", "phi_grouping", "unshared | partially_shared | fully_shared", &E::codec,
                           &CodecConfig::phi_grouping, &codec::to_string, &codec::parse_phi_grouping));
    f.push_back(int_field("codec", "phi_group_size", "scales per shared phi", &E::codec, &CodecConfig::phi_group_size));
    f.push_back(enum_field("codec", "codebook_sharing", "shared | per_scale", &E::codec, &CodecConfig::codebook_sharing,
                           &codec::to_string, &codec::parse_codebook_sharing));
    f.push_back(enum_field("codec", "codebook_update", "ema | loss", &E::codec, &CodecConfig::codebook_update,
                           &codec::to_string, &codec::parse_codebook_update));
    f.push_back(real_field("codec", "ema_decay", "EMA codebook decay", &E::codec, &CodecConfig::ema_decay));
    f.push_back(int_field("codec", "dead_code_epochs", "epochs before an unused code is re-seeded", &E::codec,
                          &CodecConfig::dead_code_epochs));

    f.push_back(int_field("stage1", "epochs", "codec training epochs", &E::stage1, &Stage1Config::epochs));
    f.push_back(int_field("stage1", "batch", "windows per step", &E::stage1, &Stage1Config::batch));
    f.push_back(real_field("stage1", "lr", "peak learning rate (cosine decay)", &E::stage1, &Stage1Config::lr));
    f.push_back(real_field("stage1", "beta1", "Adam beta1", &E::stage1, &Stage1Config::beta1));
    f.push_back(real_field("stage1", "beta2", "Adam beta2", &E::stage1, &Stage1Config::beta2));
    f.push_back(real_field("stage1", "clip_norm", "generator gradient norm limit (0 = none)", &E::stage1,
                           &Stage1Config::clip_norm));
    f.push_back(weight_field("lambda_t", "time-domain loss weight", &loss::LossWeights::lambda_t));
    f.push_back(weight_field("lambda_f", "frequency-domain loss weight", &loss::LossWeights::lambda_f));
    f.push_back(weight_field("lambda_g", "adversarial loss weight", &loss::LossWeights::lambda_g));
    f.push_back(weight_field("lambda_com", "commitment loss weight", &loss::LossWeights::lambda_com));
    f.push_back(real_field("stage1", "disc_prob", "probability of a discriminator update per step", &E::stage1,
                           &Stage1Config::disc_prob));
    f.push_back(list_field("stage1", "disc_windows", "STFT discriminator windows", &E::stage1, &Stage1Config::disc_windows));
    f.push_back(int_field("stage1", "disc_channels", "STFT discriminator channels", &E::stage1, &Stage1Config::disc_channels));
    f.push_back(int_field("stage1", "disc_layers", "STFT discriminator strided layers", &E::stage1, &Stage1Config::disc_layers));
    f.push_back(list_field("stage1", "loss_windows", "mel loss windows", &E::stage1, &Stage1Config::loss_windows));
    f.push_back(seed_field("stage1", "seed", "codec init and shuffling seed", &E::stage1, &Stage1Config::seed));
    f.push_back(real_field("stage1", "max_minutes", "wall-clock budget (0 = none)", &E::stage1, &Stage1Config::max_minutes));

    f.push_back(enum_field("stage2", "mode", "next_scale | next_token", &E::stage2, &Stage2Config::mode, &lm::to_string,
                           &lm::parse_aar_mode));
    f.push_back(int_field("stage2", "depth", "transformer layers", &E::stage2, &Stage2Config::depth));
    f.push_back(int_field("stage2", "width", "transformer width", &E::stage2, &Stage2Config::width));
    f.push_back(int_field("stage2", "heads", "attention heads", &E::stage2, &Stage2Config::heads));
    f.push_back(int_field("stage2", "mlp_ratio", "MLP expansion", &E::stage2, &Stage2Config::mlp_ratio));
    f.push_back(int_field("stage2", "cond_dim", "condition embedding size", &E::stage2, &Stage2Config::cond_dim));
    f.push_back(int_field("stage2", "epochs", "transformer training epochs", &E::stage2, &Stage2Config::epochs));
    f.push_back(int_field("stage2", "batch", "sequences per step", &E::stage2, &Stage2Config::batch));
    f.push_back(real_field("stage2", "lr", "peak learning rate", &E::stage2, &Stage2Config::lr));
    f.push_back(real_field("stage2", "weight_decay", "AdamW weight decay", &E::stage2, &Stage2Config::weight_decay));
    f.push_back(real_field("stage2", "warmup", "warmup proportion of all steps", &E::stage2, &Stage2Config::warmup));
    f.push_back(real_field("stage2", "beta1", "AdamW beta1", &E::stage2, &Stage2Config::beta1));
    f.push_back(real_field("stage2", "beta2", "AdamW beta2", &E::stage2, &Stage2Config::beta2));
    f.push_back(real_field("stage2", "cfg_drop_prob", "condition dropout probability", &E::stage2,
                           &Stage2Config::cfg_drop_prob));
    f.push_back(real_field("stage2", "clip_norm", "global gradient norm limit", &E::stage2, &Stage2Config::clip_norm));
    f.push_back(bool_field("stage2", "qk_norm", "unit-normalise queries and keys", &E::stage2, &Stage2Config::qk_norm));
    f.push_back(bool_field("stage2", "cumulative_inputs", "feed cumulative reconstructions to the next block",
                           &E::stage2, &Stage2Config::cumulative_inputs));
    f.push_back(seed_field("stage2", "seed", "transformer init and shuffling seed", &E::stage2, &Stage2Config::seed));
    f.push_back(real_field("stage2", "max_minutes", "wall-clock budget (0 = none)", &E::stage2, &Stage2Config::max_minutes));

    f.push_back(real_field("sampler", "cfg_scale", "classifier-free guidance scale", &E::sampler, &gen::SamplerConfig::cfg_scale));
    f.push_back(int_field("sampler", "top_k", "top-k filter (0 = off)", &E::sampler, &gen::SamplerConfig::top_k));
    f.push_back(real_field("sampler", "top_p", "nucleus mass (1 = off)", &E::sampler, &gen::SamplerConfig::top_p));
    f.push_back(real_field("sampler", "temperature", "softmax temperature (0 = greedy)", &E::sampler,
                           &gen::SamplerConfig::temperature));
    f.push_back(seed_field("sampler", "seed", "sampling seed", &E::sampler, &gen::SamplerConfig::seed));

    f.push_back(int_field("bench", "samples", "generations per method", &E::bench, &BenchConfig::samples));
    f.push_back(list_field("bench", "lengths", "scale schedule used by the benchmark", &E::bench, &BenchConfig::lengths));
    f.push_back(seed_field("bench", "seed", "benchmark model and sampling seed", &E::bench, &BenchConfig::seed));
    return f;
}

} // namespace

dsp::SpectralConfig ExperimentConfig::loss_spectral() const {
    return dsp::SpectralConfig::with_windows(stage1.loss_windows, codec.sample_rate);
}

loss::DiscriminatorConfig ExperimentConfig::discriminator() const {
    loss::DiscriminatorConfig d;
    d.windows = stage1.disc_windows;
    d.channels = stage1.disc_channels;
    d.layers = stage1.disc_layers;
    return d;
}

lm::AarConfig ExperimentConfig::aar(const codec::SatModel & sat) const {
    lm::AarConfig a;
    a.mode = stage2.mode;
    a.depth = stage2.depth;
    a.width = stage2.width;
    a.heads = stage2.heads;
    a.mlp_ratio = stage2.mlp_ratio;
    a.vocab = sat.vocab();
    a.latent_dim = sat.latent_dim();
    a.cond_dim = stage2.cond_dim;
    a.lengths = sat.schedule().lengths;
    a.cfg_drop_prob = stage2.cfg_drop_prob;
    a.qk_norm = stage2.qk_norm;
    a.cumulative_inputs = stage2.cumulative_inputs;
    return a;
}

const std::vector<ConfigField> & config_fields() {
    static const std::vector<ConfigField> fields = build_fields();
    return fields;
}

const ConfigField & find_field(const std::string & section, const std::string & key) {
    for (const auto & f : config_fields()) {
        if (f.section == section && f.key == key) {
            return f;
        }
    }
    throw ValidationError("unknown config key '" + section + "." + key + "'");
}

void validate(const ExperimentConfig & cfg) {
    require(cfg.data.clips >= 1, "data.clips must be >= 1");
    require(cfg.data.seconds > 0.0, "data.seconds must be positive");
    codec::validate(cfg.codec);
    const auto & s1 = cfg.stage1;
    require(s1.epochs >= 0 && s1.batch >= 1, "stage1 epochs must be >= 0 and batch >= 1");
    require(s1.lr >= 0.0, "stage1.lr must be >= 0");
    require(s1.beta1 >= 0.0 && s1.beta1 < 1.0 && s1.beta2 >= 0.0 && s1.beta2 < 1.0, "stage1 betas must lie in [0, 1)");
    require(s1.weights.lambda_t >= 0 && s1.weights.lambda_f >= 0 && s1.weights.lambda_g >= 0 && s1.weights.lambda_com >= 0,
            "loss weights must be >= 0");
    require(s1.clip_norm >= 0.0, "stage1.clip_norm must be >= 0");
    require(s1.disc_prob >= 0.0 && s1.disc_prob <= 1.0, "stage1.disc_prob must lie in [0, 1]");
    require(s1.max_minutes >= 0.0, "stage1.max_minutes must be >= 0");
    dsp::validate(cfg.loss_spectral());
    if (s1.weights.lambda_g > 0.0) {
        const auto d = cfg.discriminator();
        require(!d.windows.empty() && d.channels >= 1 && d.layers >= 0, "invalid discriminator settings");
        for (int w : d.windows) {
            require(w >= 16 && w <= cfg.codec.window_samples(), "discriminator windows must fit in a codec window");
        }
    }
    for (int w : s1.loss_windows) {
        require(w <= cfg.codec.window_samples(), "mel loss windows must fit in a codec window");
    }
    const auto & s2 = cfg.stage2;
    require(s2.epochs >= 0 && s2.batch >= 1, "stage2 epochs must be >= 0 and batch >= 1");
    require(s2.lr >= 0.0 && s2.weight_decay >= 0.0, "stage2 lr and weight decay must be >= 0");
    require(s2.warmup >= 0.0 && s2.warmup <= 1.0, "stage2.warmup must lie in [0, 1]");
    require(s2.beta1 >= 0.0 && s2.beta1 < 1.0 && s2.beta2 >= 0.0 && s2.beta2 < 1.0, "stage2 betas must lie in [0, 1)");
    require(s2.clip_norm > 0.0, "stage2.clip_norm must be positive");
    require(s2.max_minutes >= 0.0, "stage2.max_minutes must be >= 0");
    lm::AarConfig a;
    a.mode = s2.mode;
    a.depth = s2.depth;
    a.width = s2.width;
    a.heads = s2.heads;
    a.mlp_ratio = s2.mlp_ratio;
    a.vocab = cfg.codec.codebook_size;
    a.latent_dim = cfg.codec.latent_dim;
    a.cond_dim = s2.cond_dim;
    a.lengths = cfg.codec.schedule().lengths;
    a.cfg_drop_prob = s2.cfg_drop_prob;
    lm::validate(a);
    gen::validate(cfg.sampler);
    require(cfg.bench.samples >= 1, "bench.samples must be >= 1");
    codec::validate(codec::explicit_schedule(cfg.bench.lengths, cfg.bench.lengths.empty() ? 1 : cfg.bench.lengths.back()));
}

std::vector<std::string> preset_names() { return {"paper-1s-16scale-quadratic", "desk-tiny"}; }

ExperimentConfig preset(const std::string & name) {
    ExperimentConfig c;
    if (name == "paper-1s-16scale-quadratic") {
        c.codec.channels = 32;
        c.codec.residual_units = 3;
        c.stage2.depth = 16;
        c.stage2.width = 1024;
        c.stage2.heads = 16;
        c.stage2.cond_dim = 512;
        c.stage2.epochs = 45;
        return c;
    }
    if (name == "desk-tiny") {
        c.codec.channels = 4;
        c.codec.residual_units = 1;
        c.codec.latent_dim = 16;
        c.codec.codebook_size = 64;
        c.codec.scales = 8;
        c.stage1.epochs = 180;
        c.stage1.batch = 1;
        c.stage1.lr = 1e-3;
        c.stage1.weights.lambda_g = 0.0;
        c.stage1.weights.lambda_com = 0.1;
        c.stage1.disc_channels = 4;
        c.stage1.disc_layers = 2;
        c.stage1.max_minutes = 28.0;
        c.stage2.depth = 2;
        c.stage2.width = 64;
        c.stage2.heads = 4;
        c.stage2.cond_dim = 32;
        c.stage2.epochs = 100;
        c.stage2.lr = 3e-3;
        c.stage2.batch = 8;
        c.stage2.max_minutes = 14.0;
        c.bench.samples = 20;
        return c;
    }
    throw ValidationError("unknown preset '" + name + "'");
}

void apply_ini(ExperimentConfig & cfg, const std::string & text, const std::string & origin) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) {
            line = line.substr(0, comment);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            require(line.back() == ']', where + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto & f : config_fields()) {
                known = known || f.section == section;
            }
            require(known, where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, where + "expected key = value");
        require(!section.empty(), where + "key outside of a section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            find_field(section, key).set(cfg, value);
        } catch (const ValidationError & e) {
            throw ValidationError(where + e.what());
        }
    }
}

ExperimentConfig load_config(const std::filesystem::path & path, const ExperimentConfig & base) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = base;
    apply_ini(cfg, ss.str(), path.string());
    return cfg;
}

std::string to_ini(const ExperimentConfig & cfg) {
    std::ostringstream os;
    std::string section;
    for (const auto & f : config_fields()) {
        if (f.section != section) {
            os << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
            section = f.section;
        }
        os << f.key << " = " << f.get(cfg) << '\n';
    }
    return os.str();
}

} // namespace aar::harness
