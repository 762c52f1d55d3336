#include "aar/gen/generate.hpp"

#include "aar/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace aar::gen {

using nn::Tensor;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Tensor> stream_conds(const lm::AarModel & model, const Tensor & cond, const SamplerConfig & sc) {
    std::vector<Tensor> conds{cond};
    if (sc.cfg_scale != 1.0) {
        conds.push_back(model.null_cond().value().reshaped({model.config().cond_dim}));
    }
    return conds;
}

// Samples one token per logit row, guided when two streams are present.
std::vector<int> sample_rows(const std::vector<Tensor> & logits, const SamplerConfig & sc, nn::Rng & rng) {
    const Tensor mixed = logits.size() == 2 ? cfg_mix(logits[0], logits[1], sc.cfg_scale) : logits[0];
    const int n = mixed.dim(0);
    const int v = mixed.dim(1);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] =
            sample_token(std::span<const double>(mixed.data() + static_cast<std::size_t>(i) * v, static_cast<std::size_t>(v)), sc, rng);
    }
    return out;
}

void decode_into(GenerationResult & r, const codec::SatModel & sat) {
    const auto t0 = std::chrono::steady_clock::now();
    r.clip = sat.decode_audio(r.pyramid);
    r.report.decode_seconds = seconds_since(t0);
}

} // namespace

void check_compatible(const lm::AarModel & model, const codec::SatModel & sat) {
    const auto & cfg = model.config();
    require(cfg.lengths == sat.schedule().lengths, "transformer schedule does not match the codec schedule");
    require(cfg.vocab == sat.vocab(), "transformer vocabulary does not match the codec codebook size");
    require(cfg.latent_dim == sat.latent_dim(), "transformer latent size does not match the codec");
}

GenerationResult generate_next_scale(const lm::AarModel & model, const codec::SatModel & sat, const Tensor & cond,
                                     const SamplerConfig & sc) {
    validate(sc);
    check_compatible(model, sat);
    require(model.config().mode == lm::AarMode::next_scale, "next-scale generation needs a next_scale model");
    nn::Rng rng(sc.seed);
    GenerationResult r;
    r.report.method = "next_scale";
    const auto t0 = std::chrono::steady_clock::now();
    lm::InferenceSession sess(model, stream_conds(model, cond, sc));
    lm::BlockInputBuilder builder(sat, model.config().cumulative_inputs);
    const int k_total = sat.scales();
    for (int k = 0; k < k_total; ++k) {
        std::vector<Tensor> rows;
        if (k == 0) {
            rows = sess.start_rows();
        } else {
            const Tensor in = builder.next(k - 1, r.pyramid.scales.back());
            rows.assign(static_cast<std::size_t>(sess.streams()), sess.block_rows(k, in));
        }
        auto tokens = sample_rows(sess.step(rows), sc, rng);
        r.report.tokens_per_pass.push_back(static_cast<int>(tokens.size()));
        r.report.tokens_generated += static_cast<int>(tokens.size());
        r.pyramid.scales.push_back(std::move(tokens));
    }
    r.report.forward_passes = sess.forward_passes();
    r.report.wall_seconds = seconds_since(t0);
    decode_into(r, sat);
    return r;
}

GenerationResult generate_next_token(const lm::AarModel & baseline, const codec::SatModel & sat, const Tensor & cond,
                                     const SamplerConfig & sc) {
    validate(sc);
    check_compatible(baseline, sat);
    require(baseline.config().mode == lm::AarMode::next_token, "next-token generation needs a next_token model");
    nn::Rng rng(sc.seed);
    GenerationResult r;
    r.report.method = "next_token";
    const auto t0 = std::chrono::steady_clock::now();
    lm::InferenceSession sess(baseline, stream_conds(baseline, cond, sc));
    const int n = baseline.config().positions();
    std::vector<int> tokens;
    tokens.reserve(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
        std::vector<Tensor> rows;
        if (p == 0) {
            rows = sess.start_rows();
        } else {
            rows.assign(static_cast<std::size_t>(sess.streams()), sess.token_row(p, tokens.back()));
        }
        const auto t = sample_rows(sess.step(rows), sc, rng);
        tokens.push_back(t.front());
        r.report.tokens_per_pass.push_back(1);
    }
    r.report.tokens_generated = n;
    r.report.forward_passes = sess.forward_passes();
    r.report.wall_seconds = seconds_since(t0);
    r.pyramid = lm::unflatten_tokens(tokens, baseline.config().lengths);
    decode_into(r, sat);
    return r;
}

double median(std::vector<double> v) {
    require(!v.empty(), "median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

BenchSummary bench_compare(const lm::AarModel & aar, const lm::AarModel & baseline, const codec::SatModel & sat,
                           const std::vector<Tensor> & conds, int n_samples, const SamplerConfig & sc, bool decode) {
    require(n_samples >= 1, "bench needs at least one sample");
    require(!conds.empty(), "bench needs at least one condition");
    require(aar.config().positions() == baseline.config().positions(), "bench arms must generate the same number of tokens");
    BenchSummary s;
    s.samples = n_samples;
    s.tokens = aar.config().positions();
    std::vector<double> wall_ns, wall_nt, pass_ns, pass_nt;
    for (int i = 0; i < n_samples; ++i) {
        SamplerConfig c = sc;
        c.seed = sc.seed + static_cast<std::uint64_t>(i);
        const Tensor & cond = conds[static_cast<std::size_t>(i) % conds.size()];
        auto a = generate_next_scale(aar, sat, cond, c);
        auto b = generate_next_token(baseline, sat, cond, c);
        if (!decode) {
            a.report.decode_seconds = 0.0;
            b.report.decode_seconds = 0.0;
        }
        wall_ns.push_back(a.report.wall_seconds);
        wall_nt.push_back(b.report.wall_seconds);
        pass_ns.push_back(a.report.forward_passes);
        pass_nt.push_back(b.report.forward_passes);
        s.runs.push_back(std::move(a.report));
        s.runs.push_back(std::move(b.report));
    }
    s.median_wall_next_scale = median(wall_ns);
    s.median_wall_next_token = median(wall_nt);
    s.median_passes_next_scale = median(pass_ns);
    s.median_passes_next_token = median(pass_nt);
    s.pass_ratio = s.median_passes_next_token / s.median_passes_next_scale;
    s.wall_ratio = s.median_wall_next_token / s.median_wall_next_scale;
    return s;
}

void write_bench_jsonl(const std::filesystem::path & path, const BenchSummary & summary) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (std::size_t i = 0; i < summary.runs.size(); ++i) {
        const auto & r = summary.runs[i];
        nlohmann::json j{{"record", "run"},
                         {"sample", i / 2},
                         {"method", r.method},
                         {"forward_passes", r.forward_passes},
                         {"tokens_generated", r.tokens_generated},
                         {"wall_seconds", r.wall_seconds},
                         {"decode_seconds", r.decode_seconds},
                         {"tokens_per_pass", r.tokens_per_pass}};
        out << j.dump() << '\n';
    }
    nlohmann::json s{{"record", "summary"},
                     {"samples", summary.samples},
                     {"tokens", summary.tokens},
                     {"median_forward_passes", {{"next_scale", summary.median_passes_next_scale}, {"next_token", summary.median_passes_next_token}}},
                     {"median_wall_seconds", {{"next_scale", summary.median_wall_next_scale}, {"next_token", summary.median_wall_next_token}}},
                     {"forward_pass_ratio", summary.pass_ratio},
                     {"wall_time_ratio", summary.wall_ratio}};
    out << s.dump() << '\n';
}

void write_bench_svg(const std::filesystem::path & path, const BenchSummary & summary) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    const double w = 480;
    const double h = 260;
    const double left = 110;
    const double bar_max = w - left - 80;
    const double top_value = std::max(summary.median_wall_next_token, summary.median_wall_next_scale);
    auto bar = [&](double y, const std::string & label, double value, int passes, const char * colour) {
        const double len = top_value > 0 ? bar_max * value / top_value : 0.0;
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        os << "<text x=\"" << left - 8 << "\" y=\"" << y + 22 << "\" text-anchor=\"end\">" << label << "</text>\n";
        os << "<rect x=\"" << left << "\" y=\"" << y << "\" width=\"" << len << "\" height=\"34\" fill=\"" << colour
           << "\"/>\n";
        os << "<text x=\"" << left + len + 6 << "\" y=\"" << y + 15 << "\">" << value << " s</text>\n";
        os << "<text x=\"" << left + len + 6 << "\" y=\"" << y + 31 << "\">" << passes << " passes</text>\n";
        return os.str();
    };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">Median generation time, "
        << summary.tokens << " tokens, " << summary.samples << " samples</text>\n";
    out << bar(60, "next-scale", summary.median_wall_next_scale, static_cast<int>(summary.median_passes_next_scale), "#2b7bb9");
    out << bar(120, "next-token", summary.median_wall_next_token, static_cast<int>(summary.median_passes_next_token), "#d95f02");
    std::ostringstream ratio;
    ratio << std::fixed << std::setprecision(1) << "speedup " << summary.wall_ratio << "x, pass ratio "
          << summary.pass_ratio << "x";
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 30 << "\" text-anchor=\"middle\">" << ratio.str() << "</text>\n";
    out << "</svg>\n";
}

} // namespace aar::gen
