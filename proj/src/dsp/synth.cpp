#include "aar/dsp/synth.hpp"

#include "aar/dsp/wav.hpp"
#include "aar/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace aar::dsp {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng & rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void sine_sweep(std::vector<double> & x, int rate, Rng & rng) {
    const double f0 = uniform(rng, 150.0, 600.0);
    const double f1 = uniform(rng, 1500.0, 5000.0);
    const double dur = static_cast<double>(x.size()) / rate;
    const bool down = uniform(rng, 0.0, 1.0) < 0.5;
    const double a = down ? f1 : f0;
    const double b = down ? f0 : f1;
    const double k = std::log(b / a) / dur;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        x[n] = std::sin(kTwoPi * a * (std::exp(k * t) - 1.0) / k);
    }
}

void harmonic_stack(std::vector<double> & x, int rate, Rng & rng) {
    const double f0 = uniform(rng, 220.0, 440.0);
    const int harmonics = 10;
    const double tilt = uniform(rng, 0.3, 0.8);
    std::vector<double> phase(harmonics);
    for (auto & p : phase) {
        p = uniform(rng, 0.0, kTwoPi);
    }
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        double s = 0.0;
        for (int h = 1; h <= harmonics; ++h) {
            if (f0 * h >= 0.45 * rate) {
                break;
            }
            s += std::pow(static_cast<double>(h), -tilt) * std::sin(kTwoPi * f0 * h * t + phase[h - 1]);
        }
        x[n] = s;
    }
}

void low_noise(std::vector<double> & x, int rate, Rng & rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    const double cutoff = uniform(rng, 150.0, 400.0);
    const double alpha = 1.0 - std::exp(-kTwoPi * cutoff / rate);
    const double dur = static_cast<double>(x.size()) / rate;
    const double onset = uniform(rng, 0.0, 0.3 * dur);
    const double decay = uniform(rng, 0.15, 0.4) * dur;
    double y1 = 0.0;
    double y2 = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        y1 += alpha * (noise(rng) - y1);
        y2 += alpha * (y1 - y2);
        const double t = static_cast<double>(n) / rate;
        const double env = t < onset ? std::exp(-(onset - t) / 0.01) : std::exp(-(t - onset) / decay);
        x[n] = y2 * env;
    }
}

void am_fm_tone(std::vector<double> & x, int rate, Rng & rng) {
    const double fc = uniform(rng, 600.0, 1800.0);
    const double fm = uniform(rng, 3.0, 8.0);
    const double dev = uniform(rng, 20.0, 120.0);
    const double fa = uniform(rng, 2.0, 6.0);
    const double depth = uniform(rng, 0.3, 0.8);
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double t = static_cast<double>(n) / rate;
        const double inst = kTwoPi * fc * t + (dev / fm) * std::sin(kTwoPi * fm * t);
        x[n] = (1.0 - depth * 0.5 * (1.0 + std::sin(kTwoPi * fa * t))) * std::sin(inst);
    }
}

} // namespace

const char * synth_class_name(int label_id) {
    switch (label_id) {
    case 0:
        return "sine_sweep";
    case 1:
        return "harmonic_stack";
    case 2:
        return "low_noise";
    case 3:
        return "am_fm_tone";
    default:
        return "unknown";
    }
}

std::vector<LabeledClip> synth_corpus(std::uint64_t seed, int n_clips, int sample_rate, double seconds) {
    require(n_clips >= 1, "n_clips must be at least 1");
    require(is_supported_rate(sample_rate), "unsupported sample rate");
    require(seconds > 0.0, "clip length must be positive");
    const auto len = static_cast<std::size_t>(std::llround(seconds * sample_rate));
    std::vector<LabeledClip> out;
    out.reserve(static_cast<std::size_t>(n_clips));
    for (int i = 0; i < n_clips; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFU), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i)};
        Rng rng(seq);
        LabeledClip lc;
        lc.label_id = i % kSynthClasses;
        lc.clip.sample_rate = sample_rate;
        lc.clip.samples.assign(len, 0.0);
        switch (static_cast<SynthClass>(lc.label_id)) {
        case SynthClass::sine_sweep:
            sine_sweep(lc.clip.samples, sample_rate, rng);
            break;
        case SynthClass::harmonic_stack:
            harmonic_stack(lc.clip.samples, sample_rate, rng);
            break;
        case SynthClass::low_noise:
            low_noise(lc.clip.samples, sample_rate, rng);
            break;
        case SynthClass::am_fm_tone:
            am_fm_tone(lc.clip.samples, sample_rate, rng);
            break;
        }
        double peak = 0.0;
        for (double v : lc.clip.samples) {
            peak = std::max(peak, std::fabs(v));
        }
        const double target = uniform(rng, 0.5, 0.9);
        if (peak > 0.0) {
            for (double & v : lc.clip.samples) {
                v *= target / peak;
            }
        }
        out.push_back(std::move(lc));
    }
    return out;
}

void write_manifest(const std::filesystem::path & path, const std::vector<ManifestEntry> & entries) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto & e : entries) {
        nlohmann::json j{{"path", e.path}, {"label_id", e.label_id}, {"seconds", e.seconds}, {"sample_rate", e.sample_rate}};
        f << j.dump() << '\n';
    }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path & path) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot open manifest " + path.string());
    }
    std::vector<ManifestEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(line);
            ManifestEntry e;
            e.path = j.at("path").get<std::string>();
            e.label_id = j.at("label_id").get<int>();
            e.seconds = j.at("seconds").get<double>();
            e.sample_rate = j.at("sample_rate").get<int>();
            out.push_back(std::move(e));
        } catch (const nlohmann::json::exception & ex) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return out;
}

std::vector<LabeledClip> load_manifest_clips(const std::filesystem::path & manifest) {
    const auto dir = manifest.parent_path();
    std::vector<LabeledClip> out;
    for (const auto & e : read_manifest(manifest)) {
        std::filesystem::path p(e.path);
        if (p.is_relative()) {
            p = dir / p;
        }
        LabeledClip lc;
        lc.clip = load_wav(p);
        lc.label_id = e.label_id;
        out.push_back(std::move(lc));
    }
    return out;
}

} // namespace aar::dsp
