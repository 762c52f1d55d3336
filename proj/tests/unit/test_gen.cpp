#include "gradcheck.hpp"

#include "aar/error.hpp"
#include "aar/gen/generate.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace aar;
using namespace aar::gen;
using nn::Tensor;
using testutil::random_tensor;

namespace {

codec::CodecConfig tiny_codec(std::vector<int> lengths) {
    codec::CodecConfig cfg;
    cfg.window_seconds = 0.01;
    cfg.strides = {2, 4, 5};
    cfg.channels = 2;
    cfg.latent_dim = 4;
    cfg.codebook_size = 8;
    cfg.schedule_kind = codec::ScheduleKind::explicit_list;
    cfg.scales = static_cast<int>(lengths.size());
    cfg.explicit_lengths = std::move(lengths);
    return cfg;
}

lm::AarConfig tiny_aar(const codec::SatModel & sat, lm::AarMode mode) {
    lm::AarConfig cfg;
    cfg.mode = mode;
    cfg.depth = 2;
    cfg.width = 32;
    cfg.heads = 2;
    cfg.vocab = sat.vocab();
    cfg.latent_dim = sat.latent_dim();
    cfg.cond_dim = 6;
    cfg.lengths = sat.schedule().lengths;
    cfg.cfg_drop_prob = 0.0;
    return cfg;
}

Tensor unit_cond(std::uint64_t seed) {
    Tensor c = random_tensor({6}, seed);
    c.matrix() /= c.matrix().norm();
    return c;
}

codec::TokenPyramid random_pyramid(const std::vector<int> & lengths, int vocab, nn::Rng & rng) {
    std::uniform_int_distribution<int> d(0, vocab - 1);
    codec::TokenPyramid p;
    for (int l : lengths) {
        std::vector<int> s(static_cast<std::size_t>(l));
        for (auto & t : s) {
            t = d(rng);
        }
        p.scales.push_back(std::move(s));
    }
    return p;
}

} // namespace

TEST_CASE("cfg_mix") {
    const auto c = random_tensor({3, 5}, 1);
    const auto u = random_tensor({3, 5}, 2);
    CHECK(cfg_mix(c, u, 1.0).storage() == c.storage());
    CHECK(cfg_mix(c, u, 0.0).storage() == u.storage());
    CHECK(cfg_mix(Tensor({1}, 2.0), Tensor({1}, 0.0), 2.0)[0] == 4.0);
    CHECK_THROWS_AS(cfg_mix(c, Tensor({5, 3}), 2.0), ValidationError);
}

TEST_CASE("top-k filter") {
    std::vector<double> a{3, 2, 1};
    filter_top_k(a, 2);
    CHECK(a[0] == 3);
    CHECK(a[1] == 2);
    CHECK(a[2] == -INFINITY);
    std::vector<double> same{0.5, -1.0, 2.0};
    filter_top_k(same, 3);
    CHECK(same == std::vector<double>{0.5, -1.0, 2.0});
    filter_top_k(same, 7);
    CHECK(same == std::vector<double>{0.5, -1.0, 2.0});
    std::vector<double> ties{1, 1, 1, 0};
    filter_top_k(ties, 2);
    CHECK(ties == std::vector<double>{1, 1, -INFINITY, -INFINITY});

    const auto logits = random_tensor({50}, 3);
    std::vector<int> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) { return logits[static_cast<std::size_t>(x)] > logits[static_cast<std::size_t>(y)]; });
    const std::set<int> top(order.begin(), order.begin() + 5);
    SamplerConfig sc;
    sc.top_k = 5;
    sc.top_p = 1.0;
    nn::Rng rng(4);
    std::set<int> seen;
    for (int i = 0; i < 100000; ++i) {
        seen.insert(sample_token(logits.values(), sc, rng));
    }
    CHECK(std::includes(top.begin(), top.end(), seen.begin(), seen.end()));
    CHECK(seen.size() == 5);
}

TEST_CASE("top-p filter") {
    std::vector<double> p{0.5, 0.3, 0.15, 0.05};
    filter_top_p(p, 0.95);
    CHECK(std::fabs(p[0] - 0.5 / 0.95) < 1e-9);
    CHECK(std::fabs(p[1] - 0.3 / 0.95) < 1e-9);
    CHECK(std::fabs(p[2] - 0.15 / 0.95) < 1e-9);
    CHECK(p[3] == 0.0);
    CHECK(std::fabs(p[0] - 0.5263157894736842) < 1e-9);

    std::vector<double> q{0.1, 0.2, 0.3, 0.4};
    filter_top_p(q, 1.0);
    CHECK(q == std::vector<double>{0.1, 0.2, 0.3, 0.4});
    for (double pp : {0.01, 0.5, 0.99}) {
        std::vector<double> one{0.0, 1.0, 0.0};
        filter_top_p(one, pp);
        CHECK(one == std::vector<double>{0.0, 1.0, 0.0});
    }

    auto r = softmax(random_tensor({20}, 5).values());
    const auto orig = r;
    filter_top_p(r, 0.7);
    double kept_mass = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        kept_mass += r[i] > 0 ? orig[i] : 0.0;
    }
    CHECK(kept_mass >= 0.7);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] > 0) {
            CHECK(r[i] == doctest::Approx(orig[i] / kept_mass).epsilon(1e-12));
        }
    }
}

TEST_CASE("greedy decoding") {
    nn::Rng rng(6);
    SamplerConfig k1;
    k1.top_k = 1;
    SamplerConfig t0;
    t0.temperature = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto l = random_tensor({30}, 100 + i);
        const int am = static_cast<int>(std::max_element(l.values().begin(), l.values().end()) - l.values().begin());
        CHECK(sample_token(l.values(), k1, rng) == am);
        CHECK(sample_token(l.values(), t0, rng) == am);
    }
}

TEST_CASE("generation loops") {
    const std::vector<int> lengths{1, 2, 3, 6};
    codec::SatModel sat(tiny_codec(lengths), 7);
    lm::AarModel ns(tiny_aar(sat, lm::AarMode::next_scale), 8);
    lm::AarModel nt(tiny_aar(sat, lm::AarMode::next_token), 9);
    SamplerConfig sc;
    sc.seed = 10;
    const auto cond = unit_cond(11);

    auto a = generate_next_scale(ns, sat, cond, sc);
    CHECK(a.report.forward_passes == 4);
    CHECK(a.report.tokens_per_pass == lengths);
    CHECK(a.report.tokens_generated == 12);
    CHECK(a.pyramid.lengths() == lengths);
    CHECK(a.clip.samples.size() == 240);
    auto a2 = generate_next_scale(ns, sat, cond, sc);
    CHECK(a2.pyramid == a.pyramid);
    CHECK(a2.clip.samples == a.clip.samples);

    auto b = generate_next_token(nt, sat, cond, sc);
    CHECK(b.report.forward_passes == 12);
    CHECK(b.report.tokens_per_pass == std::vector<int>(12, 1));
    CHECK(b.pyramid.lengths() == lengths);
    auto b2 = generate_next_token(nt, sat, cond, sc);
    CHECK(b2.pyramid == b.pyramid);

    CHECK_THROWS_AS(generate_next_scale(nt, sat, cond, sc), ValidationError);
    codec::SatModel other(tiny_codec({2, 6}), 12);
    CHECK_THROWS_AS(generate_next_scale(ns, other, cond, sc), ValidationError);
}

TEST_CASE("greedy generation recalls memorised pyramids") {
    nn::Rng rng(13);
    const std::vector<int> lengths{1, 2, 6};
    codec::SatModel sat(tiny_codec(lengths), 14);
    lm::AarModel model(tiny_aar(sat, lm::AarMode::next_scale), 15);
    nn::Adam opt(model.params(), {0.9, 0.95, 1e-8, 0.0});
    std::vector<lm::Stage2Example> batch;
    std::vector<codec::TokenPyramid> pyramids;
    for (int i = 0; i < 8; ++i) {
        pyramids.push_back(random_pyramid(lengths, 8, rng));
        batch.push_back({lm::build_teacher_sequence(pyramids.back(), sat), unit_cond(20 + i)});
    }
    double loss = 1.0;
    for (int step = 0; step < 600 && loss >= 0.02; ++step) {
        loss = lm::train_step_stage2(model, opt, batch, 3e-3, rng).loss;
    }
    REQUIRE(loss < 0.02);
    SamplerConfig greedy;
    greedy.temperature = 0.0;
    greedy.cfg_scale = 1.0;
    for (int i = 0; i < 8; ++i) {
        const auto g = generate_next_scale(model, sat, unit_cond(20 + i), greedy);
        CHECK(g.pyramid.scales[0] == pyramids[static_cast<std::size_t>(i)].scales[0]);
        CHECK(g.pyramid.scales[1] == pyramids[static_cast<std::size_t>(i)].scales[1]);
    }
}

TEST_CASE("bench comparison") {
    const std::vector<int> lengths{1, 2, 3, 6};
    codec::SatModel sat(tiny_codec(lengths), 16);
    lm::AarModel ns(tiny_aar(sat, lm::AarMode::next_scale), 17);
    lm::AarModel nt(tiny_aar(sat, lm::AarMode::next_token), 18);
    SamplerConfig sc;
    const auto s = bench_compare(ns, nt, sat, {unit_cond(19)}, 3, sc);
    CHECK(s.median_passes_next_scale == 4);
    CHECK(s.median_passes_next_token == 12);
    CHECK(s.pass_ratio == 3.0);
    CHECK(s.runs.size() == 6);
    for (const auto & r : s.runs) {
        CHECK(r.tokens_generated == 12);
    }
    const auto dir = std::filesystem::temp_directory_path() / "aar_test_bench";
    std::filesystem::create_directories(dir);
    write_bench_jsonl(dir / "bench.jsonl", s);
    write_bench_svg(dir / "bench.svg", s);
    std::ifstream in(dir / "bench.jsonl");
    std::string line;
    int rows = 0;
    nlohmann::json last;
    while (std::getline(in, line)) {
        last = nlohmann::json::parse(line);
        ++rows;
    }
    CHECK(rows == 7);
    CHECK(last["record"] == "summary");
    CHECK(last["forward_pass_ratio"].get<double>() == 3.0);
    CHECK(std::filesystem::file_size(dir / "bench.svg") > 100);
    std::filesystem::remove_all(dir);
}
