#include "gradcheck.hpp"
#include "oracles.hpp"

#include "aar/codec/quantize.hpp"
#include "aar/codec/sat_model.hpp"
#include "aar/codec/schedule.hpp"
#include "aar/error.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace aar;
using namespace aar::codec;
using nn::Tensor;

namespace {

CodecConfig tiny_config() {
    CodecConfig cfg;
    cfg.window_seconds = 0.01; // 240 samples at 24 kHz
    cfg.strides = {2, 4, 5};   // top length 6
    cfg.channels = 2;
    cfg.latent_dim = 4;
    cfg.codebook_size = 8;
    cfg.schedule_kind = ScheduleKind::linear;
    cfg.scales = 3;
    return cfg;
}

Tensor randn(std::vector<int> shape, std::uint64_t seed, double s = 1.0) {
    return testutil::random_tensor(std::move(shape), static_cast<unsigned>(seed), s);
}

double frob(const Tensor & a, const Tensor & b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(s);
}

} // namespace

TEST_CASE("schedule arithmetic") {
    auto lin = make_schedule(ScheduleKind::linear, 16, 75);
    CHECK(lin.total() == 601);
    CHECK(lin.lengths == std::vector<int>{1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75});
    for (auto kind : {ScheduleKind::linear, ScheduleKind::quadratic, ScheduleKind::logarithmic}) {
        CHECK(make_schedule(kind, 1, 75).lengths == std::vector<int>{75});
    }
    auto lg = make_schedule(ScheduleKind::logarithmic, 16, 75);
    CHECK(lg.total() >= 296);
    CHECK(lg.total() <= 306);
    CHECK(make_schedule(ScheduleKind::quadratic, 16, 75).total() == 417);

    // Independent evaluation of the closed forms.
    for (int k_count : {2, 5, 10, 16}) {
        for (int top : {1, 7, 75, 150}) {
            auto q = make_schedule(ScheduleKind::quadratic, k_count, top);
            auto g = make_schedule(ScheduleKind::logarithmic, k_count, top);
            auto l = make_schedule(ScheduleKind::linear, k_count, top);
            for (int k = 1; k <= k_count; ++k) {
                const double t = static_cast<double>(k - 1) / (k_count - 1);
                int qe = std::max(1, static_cast<int>(std::floor(1 + (top - 1) * t * t + 1e-9)));
                int ge = std::max(1, static_cast<int>(std::floor(std::pow(top, t) + 0.5)));
                int le = std::max(1, static_cast<int>(std::floor(1 + (top - 1) * t + 1e-9)));
                if (k == k_count) {
                    qe = ge = le = top;
                }
                CHECK(q.length(k - 1) == qe);
                CHECK(g.length(k - 1) == ge);
                CHECK(l.length(k - 1) == le);
            }
            for (const auto * s : {&q, &g, &l}) {
                CHECK(s->top() == top);
                for (int k = 1; k < k_count; ++k) {
                    CHECK(s->length(k) >= s->length(k - 1));
                }
            }
        }
    }

    std::vector<int> list{1, 2, 3, 5, 8, 12, 16, 21, 27, 33, 40, 47, 55, 64, 46, 75};
    CHECK_THROWS_AS(explicit_schedule(list, 75), ValidationError);
    std::sort(list.begin(), list.end());
    CHECK(explicit_schedule(list, 75).total() == std::accumulate(list.begin(), list.end(), 0));
    CHECK_THROWS_AS(explicit_schedule({1, 2, 3}, 75), ValidationError);
    CHECK_THROWS_AS(explicit_schedule({0, 75}, 75), ValidationError);
}

TEST_CASE("vq_lookup") {
    Tensor book({4, 2}, std::vector<double>{0, 0, 1, 0, 0, 1, 1, 1});
    auto r = vq_lookup(Tensor({1, 2}, std::vector<double>{0.9, 0.1}), book);
    CHECK(r.indices[0] == 1);

    auto big = randn({16, 3}, 3);
    Tensor row7({1, 3}, std::vector<double>{big.at(7, 0), big.at(7, 1), big.at(7, 2)});
    auto e = vq_lookup(row7, big);
    CHECK(e.indices[0] == 7);
    CHECK(e.z.storage() == row7.storage());

    Tensor tie({6, 1}, std::vector<double>{10, 10, 1, 10, 10, 3});
    CHECK(vq_lookup(Tensor({1, 1}, std::vector<double>{2.0}), tie).indices[0] == 2);

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto cb = randn({32, 5}, 100 + trial);
        auto x = randn({20, 5}, 200 + trial);
        auto got = vq_lookup(x, cb);
        for (int i = 0; i < 20; ++i) {
            int best = 0;
            double bd = INFINITY;
            for (int c = 0; c < 32; ++c) {
                double dd = 0.0;
                for (int j = 0; j < 5; ++j) {
                    dd += (x.at(i, j) - cb.at(c, j)) * (x.at(i, j) - cb.at(c, j));
                }
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            CHECK(got.indices[static_cast<std::size_t>(i)] == best);
        }
    }
}

TEST_CASE("interpolate_tokens") {
    Tensor one({1, 2}, std::vector<double>{0.25, -3.0});
    auto rep = interpolate_tokens(one, 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(rep.at(i, 0) == 0.25);
        CHECK(rep.at(i, 1) == -3.0);
    }
    auto x = randn({7, 3}, 4);
    CHECK(interpolate_tokens(x, 7).storage() == x.storage());

    // Dyadic grid: 9 -> 5 -> 9 on an integer ramp is exact.
    Tensor ramp({9, 1});
    for (int i = 0; i < 9; ++i) {
        ramp[static_cast<std::size_t>(i)] = 3.0 * i - 2.0;
    }
    CHECK(interpolate_tokens(interpolate_tokens(ramp, 5), 9).storage() == ramp.storage());
    // General lengths reproduce the ramp to rounding.
    for (auto [l, m] : std::vector<std::pair<int, int>>{{75, 17}, {40, 3}, {10, 2}, {33, 32}}) {
        Tensor r({l, 2});
        for (int i = 0; i < l; ++i) {
            r.at(i, 0) = 0.5 * i;
            r.at(i, 1) = 2.0 - 0.1 * i;
        }
        auto back = interpolate_tokens(interpolate_tokens(r, m), l);
        CHECK(frob(back, r) < 1e-12);
    }
}

TEST_CASE("phi upsampler") {
    nn::ParamStore store;
    PhiUpsampler zero(store, 3, 4, 0.0, PhiGrouping::unshared, 3);
    auto z = randn({6, 4}, 5);
    CHECK(zero.apply(1, z).storage() == z.storage());

    nn::ParamStore s1;
    PhiUpsampler one(s1, 3, 4, 1.0, PhiGrouping::fully_shared, 3);
    CHECK(one.groups() == 1);
    CHECK(one.apply(2, z).storage() == z.storage());

    nn::ParamStore s2;
    PhiUpsampler half(s2, 3, 4, 0.5, PhiGrouping::unshared, 3);
    CHECK(half.groups() == 3);
    auto & w = half.conv(half.group_of(1)).weight.mutable_value();
    for (int c = 0; c < 4; ++c) {
        w[(static_cast<std::size_t>(c) * 4 + c) * 9 + 4] = 2.0;
    }
    auto y = half.apply(1, z);
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(y[i] == 1.5 * z[i]);
    }

    nn::ParamStore s3;
    PhiUpsampler part(s3, 16, 4, 0.5, PhiGrouping::partially_shared, 3);
    CHECK(part.groups() == 6);
    CHECK(part.group_of(0) == 0);
    CHECK(part.group_of(2) == 0);
    CHECK(part.group_of(3) == 1);
    CHECK(part.group_of(15) == 5);
}

TEST_CASE("msrq matches plain residual VQ at gamma 0 with an all-top schedule") {
    CodecConfig cfg = tiny_config();
    cfg.gamma = 0.0;
    cfg.schedule_kind = ScheduleKind::explicit_list;
    cfg.explicit_lengths = {6, 6, 6, 6};
    cfg.codebook_size = 32;
    SatModel model(cfg, 1);
    std::vector<Tensor> books;
    for (int k = 0; k < model.scales(); ++k) {
        books.push_back(model.codebook(k));
    }
    for (int trial = 0; trial < 20; ++trial) {
        auto f = randn({6, 4}, 300 + trial);
        auto got = model.msrq_encode(f);
        auto want = testutil::plain_rvq(f, books);
        CHECK(got.pyramid.scales == want.indices);
        CHECK(std::vector<double>(got.f_hat.storage().begin(), got.f_hat.storage().end()) == want.f_hat);
        CHECK(model.msrq_decode(got.pyramid).storage() == got.f_hat.storage());
    }
}

TEST_CASE("telescoping residual is exact on dyadic values") {
    CodecConfig cfg = tiny_config();
    cfg.gamma = 0.0;
    cfg.schedule_kind = ScheduleKind::explicit_list;
    cfg.explicit_lengths = {6, 6, 6};
    SatModel model(cfg, 2);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> q(-64, 64);
    for (int c = 0; c < model.codebook_count(); ++c) {
        auto book = model.codebook_var(c);
        for (auto & v : book.mutable_value().values()) {
            v = q(rng) / 16.0;
        }
    }
    Tensor f({6, 4});
    for (auto & v : f.values()) {
        v = q(rng) / 8.0;
    }
    auto r = model.msrq_encode(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
        double sum_z = 0.0;
        for (const auto & z : r.selected) {
            sum_z += z[i];
        }
        CHECK(f[i] - sum_z == r.residual[i]);
    }
}

TEST_CASE("msrq degenerate and decode contracts") {
    CodecConfig cfg = tiny_config();
    cfg.scales = 1;
    SatModel single(cfg, 4);
    auto f = randn({6, 4}, 6);
    auto r = single.msrq_encode(f);
    auto direct = vq_lookup(f, single.codebook(0));
    CHECK(r.pyramid.scales[0] == direct.indices);
    CHECK(r.f_hat.storage() == direct.z.storage());
    CHECK(single.msrq_decode(r.pyramid).storage() == gather(single.codebook(0), direct.indices).storage());

    SatModel model(tiny_config(), 5);
    for (int trial = 0; trial < 10; ++trial) {
        auto ff = randn({6, 4}, 400 + trial);
        auto enc = model.msrq_encode(ff);
        CHECK(model.msrq_decode(enc.pyramid).storage() == enc.f_hat.storage());
        CHECK(enc.pyramid.lengths() == model.schedule().lengths);
    }
    auto bad = model.msrq_encode(f).pyramid;
    bad.scales[1][0] = 99;
    CHECK_THROWS_AS(model.msrq_decode(bad), ValidationError);
    bad.scales.pop_back();
    CHECK_THROWS_AS(model.msrq_decode(bad), ValidationError);

    CodecConfig zc = tiny_config();
    zc.gamma = 0.0;
    SatModel zero(zc, 7);
    for (int c = 0; c < zero.codebook_count(); ++c) {
        zero.codebook_var(c).mutable_value().fill(0.0);
    }
    auto zp = zero.msrq_encode(f).pyramid;
    const Tensor decoded = zero.msrq_decode(zp);
    for (double v : decoded.values()) {
        CHECK(v == 0.0);
    }
    auto a = zero.decode_audio(zp);
    zp.scales[0][0] = 3;
    auto b = zero.decode_audio(zp);
    CHECK(a.samples == b.samples);
}

TEST_CASE("adding the final scale does not increase error after data-seeded codebooks") {
    CodecConfig cfg = tiny_config();
    cfg.codebook_size = 64;
    cfg.schedule_kind = ScheduleKind::linear;
    cfg.scales = 4;
    SatModel model(cfg, 8);
    std::vector<Tensor> latents;
    for (int i = 0; i < 16; ++i) {
        latents.push_back(randn({6, 4}, 500 + i));
    }
    nn::Rng rng(9);
    model.init_codebooks_from_latents(latents, rng);
    for (const auto & f : latents) {
        const auto full = model.msrq_encode(f);
        const auto cut = model.msrq_encode(f, model.scales() - 1);
        CHECK(frob(f, full.f_hat) <= frob(f, cut.f_hat));
    }
}

TEST_CASE("codec audio contracts") {
    CodecConfig cfg;
    cfg.channels = 2;
    cfg.codebook_size = 16;
    SatModel model(cfg, 10);
    CHECK(model.schedule().top() == 75);
    CHECK(model.schedule().total() == 417);
    dsp::AudioClip clip;
    clip.samples.resize(24000);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = 0.5 * std::sin(0.01 * static_cast<double>(i));
    }
    auto p1 = model.encode_audio(clip);
    auto p2 = model.encode_audio(clip);
    CHECK(p1 == p2);
    CHECK(p1.scales.back().size() == 75);
    CHECK(p1.total() == 417);
    auto out = model.decode_audio(p1);
    CHECK(out.samples.size() == 24000);
    for (double v : out.samples) {
        CHECK(std::isfinite(v));
        CHECK(std::fabs(v) <= 1.0);
    }
    clip.samples.pop_back();
    CHECK_THROWS_AS(model.encode_audio(clip), ValidationError);
}

TEST_CASE("codebook utilization") {
    TokenPyramid zeros{{{0, 0, 0}, {0}}};
    auto u = codebook_utilization({zeros}, 16);
    CHECK(u[0] == 1.0 / 16);
    CHECK(u[1] == 1.0 / 16);

    TokenPyramid all;
    all.scales.resize(1);
    for (int i = 0; i < 16; ++i) {
        all.scales[0].push_back(15 - i);
    }
    CHECK(codebook_utilization({all}, 16)[0] == 1.0);

    const int vocab = 1024;
    const int n = 3000;
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> pick(0, vocab - 1);
    double mean = 0.0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        TokenPyramid p;
        p.scales.resize(1);
        for (int i = 0; i < n; ++i) {
            p.scales[0].push_back(pick(rng));
        }
        mean += codebook_utilization({p}, vocab)[0];
    }
    mean /= trials;
    const double expected = 1.0 - std::pow(1.0 - 1.0 / vocab, n);
    CHECK(mean == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("pyramid file round trip") {
    auto dir = std::filesystem::temp_directory_path() / "aar_test_codec";
    TokenPyramid p{{{1}, {2, 3}, {1023, 0, 7, 512}}};
    write_pyramid(dir / "p.satp", p, 1024);
    int vocab = 0;
    CHECK(read_pyramid(dir / "p.satp", &vocab) == p);
    CHECK(vocab == 1024);
    std::ofstream(dir / "bad.satp") << "XXXX";
    CHECK_THROWS_AS(read_pyramid(dir / "bad.satp"), FormatError);
}

TEST_CASE("straight-through gradient equals the decoder gradient at f_hat") {
    CodecConfig cfg = tiny_config();
    SatModel model(cfg, 13);
    auto f0 = randn({6, 4}, 14);
    auto r = randn({1, 240}, 15);

    nn::Var f(f0, true);
    auto trace = model.msrq_train(f);
    auto loss = nn::sum(nn::mul(model.decode_latent(trace.f_hat), nn::constant(r)));
    nn::backward(loss);
    const Tensor st = f.grad();

    const Tensor y0 = trace.result.f_hat;
    CHECK(trace.f_hat.value().storage() == y0.storage());
    const double eps = 1e-4;
    double worst = 0.0;
    for (std::size_t i = 0; i < y0.size(); ++i) {
        auto eval = [&](double delta) {
            Tensor y = y0;
            y[i] += delta;
            nn::NoGradGuard ng;
            return testutil::contract(model.decode_latent(nn::constant(y)).value(), r);
        };
        const double fd = (eval(eps) - eval(-eps)) / (2 * eps);
        worst = std::max(worst, std::fabs(fd - st[i]) / std::max(1e-8, std::fabs(fd)));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("ema update and dead code reseeding") {
    CodecConfig cfg = tiny_config();
    cfg.ema_decay = 0.5;
    SatModel model(cfg, 18);
    std::vector<Tensor> latents{randn({6, 4}, 19), randn({6, 4}, 20)};
    nn::Rng rng(21);
    model.init_codebooks_from_latents(latents, rng);
    CHECK(model.ema().initialised);
    std::vector<MsrqResult> batch;
    for (const auto & f : latents) {
        batch.push_back(model.msrq_encode(f));
    }
    const Tensor before = model.codebook(0);
    model.ema_update(batch, 1);
    const auto & used = batch[0].pyramid.scales[0];
    const int code = used[0];
    // A used code moves toward the mean of its assigned inputs.
    double dist_before = 0.0;
    double dist_after = 0.0;
    for (int j = 0; j < 4; ++j) {
        const double target = batch[0].inputs[0].at(0, j);
        dist_before += std::fabs(before.at(code, j) - target);
        dist_after += std::fabs(model.codebook(0).at(code, j) - target);
    }
    CHECK(dist_after <= dist_before + 1e-12);
    CHECK(model.ema_reseed_dead_codes(batch, 1, rng) == 0);
    const int reseeded = model.ema_reseed_dead_codes(batch, 3, rng);
    CHECK(reseeded > 0);
    for (int c = 0; c < model.codebook_count(); ++c) {
        CHECK(model.codebook_var(c).value().all_finite());
    }
}
