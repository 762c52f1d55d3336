#include "gradcheck.hpp"

#include "aar/codec/sat_model.hpp"
#include "aar/error.hpp"
#include "aar/loss/discriminator.hpp"
#include "aar/loss/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

using namespace aar;
using namespace aar::loss;
using nn::Tensor;
using nn::Var;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

Var cvar(std::vector<int> shape, std::vector<double> v) { return nn::constant(Tensor(std::move(shape), std::move(v))); }

Var filled(std::vector<int> shape, double v) { return nn::constant(Tensor(std::move(shape), v)); }

dsp::SpectralConfig toy_spectral() {
    dsp::SpectralConfig cfg;
    cfg.window_sizes = {8, 16};
    cfg.mel_bins = {8, 8};
    return cfg;
}

// log1p(mel(|DFT|)) by direct summation, rows = frames.
std::vector<std::vector<double>> naive_log_mel(const Tensor & x, int n, int mels, int rate) {
    const auto fb = dsp::mel_filterbank(n, mels, rate);
    const int hop = n / 4;
    const int frames = 1 + (static_cast<int>(x.size()) - n) / hop;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(frames), std::vector<double>(static_cast<std::size_t>(mels)));
    for (int f = 0; f < frames; ++f) {
        std::vector<double> mag(static_cast<std::size_t>(n / 2 + 1));
        for (int k = 0; k <= n / 2; ++k) {
            std::complex<double> acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * i / n);
                acc += x[static_cast<std::size_t>(f * hop + i)] * w * std::polar(1.0, -2 * std::numbers::pi * k * i / n);
            }
            mag[static_cast<std::size_t>(k)] = std::abs(acc);
        }
        for (int m = 0; m < mels; ++m) {
            double s = 0.0;
            for (int k = 0; k <= n / 2; ++k) {
                s += mag[static_cast<std::size_t>(k)] * fb.at(k, m);
            }
            out[static_cast<std::size_t>(f)][static_cast<std::size_t>(m)] = std::log1p(s);
        }
    }
    return out;
}

} // namespace

TEST_CASE("time loss") {
    auto a = random_tensor({1, 64}, 1);
    CHECK(loss_time(nn::constant(a), nn::constant(a)).item() == 0.0);
    CHECK(loss_time(filled({1, 10}, 0.0), filled({1, 10}, 0.5)).item() == 0.5);
    auto b = random_tensor({1, 64}, 2);
    double brute = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        brute += std::fabs(a[i] - b[i]);
    }
    CHECK(loss_time(nn::constant(a), nn::constant(b)).item() == doctest::Approx(brute / 64).epsilon(1e-12));
    CHECK_THROWS_AS(loss_time(filled({1, 3}, 0.0), filled({1, 4}, 0.0)), ValidationError);
}

TEST_CASE("frequency loss") {
    dsp::SpectralConfig cfg;
    auto a = random_tensor({1, 2048}, 3, 0.3);
    CHECK(loss_freq(nn::constant(a), nn::constant(a), cfg).item() == 0.0);

    auto fa = random_tensor({5, 8}, 4);
    auto fb = random_tensor({5, 8}, 5);
    Tensor fb2 = fa;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        fb2[i] = fa[i] - 2.0 * (fa[i] - fb[i]);
    }
    auto t1 = spectral_terms({nn::constant(fa)}, {nn::constant(fb)});
    auto t2 = spectral_terms({nn::constant(fa)}, {nn::constant(fb2)});
    CHECK(t2.l1.item() == doctest::Approx(2.0 * t1.l1.item()).epsilon(1e-12));
    CHECK(t2.l2.item() == doctest::Approx(4.0 * t1.l2.item()).epsilon(1e-12));

    dsp::SpectralConfig one;
    one.window_sizes = {256};
    one.mel_bins = {32};
    auto b = random_tensor({1, 2048}, 6, 0.3);
    auto ma = naive_log_mel(a, 256, 32, 24000);
    auto mb = naive_log_mel(b, 256, 32, 24000);
    double l1 = 0.0;
    double l2 = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < ma.size(); ++f) {
        for (std::size_t m = 0; m < ma[f].size(); ++m) {
            const double d = ma[f][m] - mb[f][m];
            l1 += std::fabs(d);
            l2 += d * d;
            ++count;
        }
    }
    const double expected = l1 / count + l2 / count;
    CHECK(loss_freq(nn::constant(a), nn::constant(b), one).item() == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("gradients of time, frequency and commitment losses") {
    auto a = random_tensor({1, 16}, 7, 0.5);
    auto a_hat = random_tensor({1, 16}, 8, 0.5);
    const auto cfg = toy_spectral();
    CHECK(gradcheck([&](const auto & v) { return loss_time(nn::constant(a), v[0]); }, {a_hat}) < 1e-3);
    CHECK(gradcheck([&](const auto & v) { return loss_freq(nn::constant(a), v[0], cfg); }, {a_hat}) < 1e-3);
    auto x1 = random_tensor({3, 4}, 9);
    auto x2 = random_tensor({5, 4}, 10);
    auto z1 = random_tensor({3, 4}, 11);
    auto z2 = random_tensor({5, 4}, 12);
    CHECK(gradcheck(
              [&](const auto & v) {
                  return loss_vq_commit({v[0], v[1]}, {nn::constant(z1), nn::constant(z2)}).l_com;
              },
              {x1, x2}) < 1e-4);
}

TEST_CASE("vq and commitment values") {
    auto x = random_tensor({4, 3}, 13);
    auto same = loss_vq_commit({nn::constant(x)}, {nn::constant(x)});
    CHECK(same.l_vq.item() == 0.0);
    CHECK(same.l_com.item() == 0.0);
    auto r = loss_vq_commit({cvar({1, 2}, {1, 0})}, {cvar({1, 2}, {0, 0})});
    CHECK(r.l_vq.item() == 1.0);
    CHECK(r.l_com.item() == 1.0);

    // Codebook gradients only through L_vq.
    Var x_var(x, true);
    Var z_var(random_tensor({4, 3}, 14), true);
    auto both = loss_vq_commit({x_var}, {z_var});
    nn::backward(both.l_vq);
    CHECK(x_var.grad().empty());
    CHECK(!z_var.grad().empty());
}

TEST_CASE("msrq trace feeds the commitment loss") {
    codec::CodecConfig cfg;
    cfg.window_seconds = 0.01;
    cfg.strides = {2, 4, 5};
    cfg.channels = 2;
    cfg.latent_dim = 4;
    cfg.codebook_size = 8;
    cfg.schedule_kind = codec::ScheduleKind::linear;
    cfg.scales = 3;
    codec::SatModel model(cfg, 16);
    Var f(random_tensor({6, 4}, 17), true);
    auto trace = model.msrq_train(f);
    auto vc = loss_vq_commit(trace.inputs, trace.selected);
    double expected = 0.0;
    for (int k = 0; k < model.scales(); ++k) {
        const auto & x = trace.result.inputs[static_cast<std::size_t>(k)];
        const auto & z = trace.result.selected[static_cast<std::size_t>(k)];
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            s += (x[i] - z[i]) * (x[i] - z[i]);
        }
        expected += s / x.dim(0);
    }
    CHECK(vc.l_com.item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(vc.l_vq.item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(gradcheck(
              [&](const auto & v) {
                  auto t = model.msrq_train(v[0]);
                  // Freeze the token choice made at f so the check is smooth.
                  std::vector<Var> zs;
                  for (const auto & z : trace.result.selected) {
                      zs.push_back(nn::constant(z));
                  }
                  return loss_vq_commit(t.inputs, zs).l_com;
              },
              {f.value()}, 1e-7) < 1e-4);
}

TEST_CASE("stft discriminator") {
    DiscriminatorConfig cfg;
    cfg.channels = 4;
    StftDiscriminator disc(cfg, 18);
    CHECK(disc.parameter_count() > 0);
    const int samples = 4096;
    Var zero(Tensor({1, samples}), false);
    auto logits = disc.forward(zero);
    REQUIRE(logits.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        const int win = cfg.windows[r];
        int h = 1 + (samples - win) / (win / 4);
        int w = win / 2 + 1;
        // in (3,9) stride 1; three (3,9) stride (1,2); mix (3,3); out (3,3); all padded by half the kernel.
        for (int l = 0; l < cfg.layers; ++l) {
            w = (w + 8 - 9) / 2 + 1;
        }
        CHECK(logits[r].dim(0) == h);
        CHECK(logits[r].dim(1) == w);
        CHECK(disc.output_shapes(samples)[r] == std::make_pair(h, w));
        CHECK(logits[r].value().all_finite());
    }
    auto clip = nn::constant(random_tensor({1, samples}, 19, 0.3));
    auto a = disc.forward(clip);
    auto b = disc.forward(clip);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(a[r].value().storage() == b[r].value().storage());
    }
    CHECK_THROWS_AS(disc.forward(filled({1, 1000}, 0.0)), ValidationError);
}

TEST_CASE("hinge adversarial losses") {
    auto adv = loss_adversarial({filled({2, 3}, 1.0), filled({4, 1}, 1.0)}, {filled({2, 3}, -1.0), filled({4, 1}, -1.0)});
    CHECK(adv.l_d.item() == 0.0);
    CHECK(hinge_generator({filled({3, 3}, 0.0)}).item() == 0.0);

    auto r1 = random_tensor({3, 4}, 20);
    auto r2 = random_tensor({2, 5}, 21);
    auto f1 = random_tensor({3, 4}, 22);
    auto f2 = random_tensor({2, 5}, 23);
    auto hand_d = [](const Tensor & real, const Tensor & fake) {
        double a = 0.0;
        double b = 0.0;
        for (double v : real.values()) {
            a += std::max(0.0, 1.0 - v);
        }
        for (double v : fake.values()) {
            b += std::max(0.0, 1.0 + v);
        }
        return a / real.size() + b / fake.size();
    };
    auto hand_g = [](const Tensor & fake) {
        double s = 0.0;
        for (double v : fake.values()) {
            s += v;
        }
        return -s / fake.size();
    };
    auto got = loss_adversarial({nn::constant(r1), nn::constant(r2)}, {nn::constant(f1), nn::constant(f2)});
    CHECK(got.l_d.item() == doctest::Approx(0.5 * (hand_d(r1, f1) + hand_d(r2, f2))).epsilon(1e-12));
    CHECK(got.l_g.item() == doctest::Approx(0.5 * (hand_g(f1) + hand_g(f2))).epsilon(1e-12));
    CHECK(got.l_d.item() >= 0.0);

    double prev = INFINITY;
    for (double shift = -2.0; shift <= 2.0; shift += 0.5) {
        Tensor f = f1;
        for (auto & v : f.values()) {
            v += shift;
        }
        const double lg = hinge_generator({nn::constant(f)}).item();
        CHECK(lg < prev);
        prev = lg;
    }
}

TEST_CASE("total stage-1 loss") {
    auto s = [](double v) { return nn::constant(Tensor::scalar(v)); };
    LossWeights w;
    CHECK(total_stage1_loss({s(0), s(0), s(0), s(0), s(0)}, w).item() == 0.0);
    CHECK(total_stage1_loss({s(1), s(1), s(1), s(1), s(1)}, w).item() == doctest::Approx(8.1).epsilon(1e-15));
    Stage1Parts p{s(0.3), s(1.7), s(-0.2), s(0.9), s(0.4)};
    const double base = total_stage1_loss(p, w).item();
    LossWeights w2{0.2, 6.0, 6.0, 2.0};
    CHECK(total_stage1_loss(p, w2).item() == doctest::Approx(2.0 * base - 0.9).epsilon(1e-12));
    CHECK_THROWS_AS(total_stage1_loss({s(NAN), s(0), s(0), s(0), s(0)}, w), DivergenceError);
}
