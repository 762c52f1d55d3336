#include "gradcheck.hpp"

#include "aar/dsp/synth.hpp"
#include "aar/error.hpp"
#include "aar/lm/aar_model.hpp"
#include "aar/lm/conditioner.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace aar;
using namespace aar::lm;
using nn::Tensor;
using testutil::random_tensor;

namespace {

codec::CodecConfig tiny_codec(std::vector<int> lengths, double gamma) {
    codec::CodecConfig cfg;
    cfg.window_seconds = 0.01;
    cfg.strides = {2, 4, 5};
    cfg.channels = 2;
    cfg.latent_dim = 4;
    cfg.codebook_size = 8;
    cfg.schedule_kind = codec::ScheduleKind::explicit_list;
    cfg.scales = static_cast<int>(lengths.size());
    cfg.explicit_lengths = std::move(lengths);
    cfg.gamma = gamma;
    return cfg;
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

AarConfig tiny_aar(const codec::SatModel & sat, int width = 16, int depth = 2, int heads = 2) {
    AarConfig cfg;
    cfg.depth = depth;
    cfg.width = width;
    cfg.heads = heads;
    cfg.vocab = sat.vocab();
    cfg.latent_dim = sat.latent_dim();
    cfg.cond_dim = 6;
    cfg.lengths = sat.schedule().lengths;
    cfg.cfg_drop_prob = 0.0;
    return cfg;
}

Tensor unit_cond(int dim, std::uint64_t seed) {
    Tensor c = random_tensor({dim}, seed);
    c.matrix() /= c.matrix().norm();
    return c;
}

double cosine(const Tensor & a, const Tensor & b) {
    return a.matrix().cwiseProduct(b.matrix()).sum() / (a.matrix().norm() * b.matrix().norm());
}

} // namespace

TEST_CASE("block mask") {
    auto m = build_block_mask(codec::explicit_schedule({1, 2}, 2));
    CHECK(m == std::vector<std::vector<bool>>{{true, false, false}, {true, true, true}, {true, true, true}});
    auto single = build_block_mask(codec::explicit_schedule({4}, 4));
    for (const auto & row : single) {
        CHECK(std::all_of(row.begin(), row.end(), [](bool b) { return b; }));
    }

    nn::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> lengths;
        std::uniform_int_distribution<int> d(1, 5);
        const int k = d(rng);
        for (int i = 0; i < k; ++i) {
            lengths.push_back(d(rng));
        }
        std::sort(lengths.begin(), lengths.end());
        const auto mask = build_block_mask(codec::explicit_schedule(lengths, lengths.back()));
        const int n = std::accumulate(lengths.begin(), lengths.end(), 0);
        // Reachability oracle: q is visible from p iff q starts before the end of p's block.
        auto block_end = [&](int p) {
            int end = 0;
            for (int l : lengths) {
                end += l;
                if (p < end) {
                    return end;
                }
            }
            return end;
        };
        for (int p = 0; p < n; ++p) {
            for (int q = 0; q < n; ++q) {
                CHECK(mask[static_cast<std::size_t>(p)][static_cast<std::size_t>(q)] == (q < block_end(p)));
            }
        }
    }
}

TEST_CASE("teacher sequence") {
    nn::Rng rng(4);
    codec::SatModel sat(tiny_codec({6, 6, 6}, 0.0), 5);
    auto pyr = random_pyramid({6, 6, 6}, sat.vocab(), rng);
    auto seq = build_teacher_sequence(pyr, sat);
    CHECK(seq.positions() == 18);
    CHECK(seq.block_inputs.dim(0) == 12);
    CHECK(seq.targets == flatten_pyramid(pyr));
    for (int k = 0; k < 2; ++k) {
        const Tensor rows = codec::gather(sat.codebook(k), pyr.scales[static_cast<std::size_t>(k)]);
        for (int r = 0; r < 6; ++r) {
            for (int c = 0; c < 4; ++c) {
                CHECK(seq.block_inputs.at(k * 6 + r, c) == rows.at(r, c));
            }
        }
    }

    AarModel model(tiny_aar(sat), 6);
    const auto cond = model.cond_var(unit_cond(6, 7));
    const auto x = model.embed(seq, cond).value();
    const auto start = nn::linear(cond, model.params().get("cond.start.weight"), model.params().get("cond.start.bias"));
    const auto word = nn::linear(nn::constant(seq.block_inputs), model.params().get("embed.word.weight"),
                                 model.params().get("embed.word.bias"));
    const auto & pos = model.params().get("embed.pos").value();
    const auto & level = model.params().get("embed.level").value();
    for (int p = 0; p < 18; ++p) {
        for (int c = 0; c < 16; ++c) {
            const double base = p < 6 ? start.value().at(0, c) : word.value().at(p - 6, c);
            CHECK(x.at(p, c) == doctest::Approx(base + pos.at(p, c) + level.at(p / 6, c)).epsilon(1e-13));
        }
    }

    codec::SatModel single(tiny_codec({6}, 0.5), 8);
    auto p1 = random_pyramid({6}, single.vocab(), rng);
    auto s1 = build_teacher_sequence(p1, single);
    CHECK(s1.positions() == 6);
    CHECK(s1.block_inputs.dim(0) == 0);

    codec::SatModel pyramidal(tiny_codec({1, 2, 4, 6}, 0.5), 9);
    auto p2 = random_pyramid({1, 2, 4, 6}, pyramidal.vocab(), rng);
    auto s2 = build_teacher_sequence(p2, pyramidal);
    CHECK(s2.block_ids == std::vector<int>{0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3});
    CHECK(s2.block_inputs.dim(0) == 12);
    auto s3 = build_teacher_sequence(p2, pyramidal, true);
    // Cumulative and literal inputs coincide for the first next-block.
    for (int c = 0; c < 4; ++c) {
        CHECK(s3.block_inputs.at(0, c) == doctest::Approx(s2.block_inputs.at(0, c)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(build_teacher_sequence(p1, pyramidal), ValidationError);
}

TEST_CASE("attention weights: qk normalisation and mask") {
    const auto q = random_tensor({5, 8}, 10);
    const auto k = random_tensor({5, 8}, 11);
    const auto v = random_tensor({5, 8}, 12);
    Tensor q10 = q;
    Tensor k10 = k;
    q10.matrix() *= 10.0;
    k10.matrix() *= 10.0;
    std::vector<int> g{0, 1, 1, 2, 2};
    nn::AttentionSpec spec;
    spec.heads = 2;
    Tensor w1;
    Tensor w2;
    const auto lt = nn::constant(Tensor({2}, 1.0));
    nn::attention(nn::constant(q), nn::constant(k), nn::constant(v), lt, g, g, spec, &w1);
    nn::attention(nn::constant(q10), nn::constant(k10), nn::constant(v), lt, g, g, spec, &w2);
    for (std::size_t i = 0; i < w1.size(); ++i) {
        CHECK(std::fabs(w1[i] - w2[i]) < 1e-6);
    }

    nn::Rng rng(13);
    codec::SatModel sat(tiny_codec({1, 2, 4, 6}, 0.5), 14);
    AarModel model(tiny_aar(sat), 15);
    auto seq = build_teacher_sequence(random_pyramid({1, 2, 4, 6}, 8, rng), sat);
    std::vector<Tensor> weights;
    model.forward(seq, model.cond_var(unit_cond(6, 16)), &weights);
    REQUIRE(weights.size() == 2);
    const auto mask = build_block_mask(sat.schedule());
    for (const auto & w : weights) {
        for (int h = 0; h < 2; ++h) {
            for (int p = 0; p < 13; ++p) {
                double row = 0.0;
                for (int qq = 0; qq < 13; ++qq) {
                    const double a = w[static_cast<std::size_t>((h * 13 + p) * 13 + qq)];
                    row += a;
                    if (!mask[static_cast<std::size_t>(p)][static_cast<std::size_t>(qq)]) {
                        CHECK(a == 0.0);
                    }
                }
                CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("condition sensitivity and initial entropy") {
    nn::Rng rng(17);
    codec::SatModel sat(tiny_codec({1, 2, 4, 6}, 0.5), 18);
    AarModel model(tiny_aar(sat), 19);
    auto seq = build_teacher_sequence(random_pyramid({1, 2, 4, 6}, 8, rng), sat);
    const auto a = model.forward(seq, model.cond_var(unit_cond(6, 20))).value();
    const auto b = model.forward(seq, model.cond_var(unit_cond(6, 21))).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::fabs(a[i] - b[i]));
    }
    CHECK(diff > 1e-8);

    AarConfig big;
    big.depth = 2;
    big.width = 64;
    big.heads = 4;
    big.vocab = 1024;
    big.latent_dim = 4;
    big.cond_dim = 6;
    big.lengths = {1, 2, 4, 6};
    AarModel wide(big, 22);
    codec::SatModel sat1024(
        [] {
            auto c = tiny_codec({1, 2, 4, 6}, 0.5);
            c.codebook_size = 1024;
            return c;
        }(),
        23);
    auto seq1024 = build_teacher_sequence(random_pyramid({1, 2, 4, 6}, 1024, rng), sat1024);
    const double ce = wide.loss(seq1024, wide.cond_var(unit_cond(6, 24))).item();
    CHECK(std::fabs(ce - std::log(1024.0)) < 0.1);
}

TEST_CASE("causality: later scales never influence earlier blocks") {
    nn::Rng rng(25);
    const std::vector<int> lengths{1, 2, 3, 6};
    for (int trial = 0; trial < 50; ++trial) {
        codec::SatModel sat(tiny_codec(lengths, 0.5), 100 + trial);
        AarModel model(tiny_aar(sat), 200 + trial);
        auto pyr = random_pyramid(lengths, 8, rng);
        const auto cond = model.cond_var(unit_cond(6, 300 + trial));
        const auto base = model.forward(build_teacher_sequence(pyr, sat), cond).value();
        const int j = trial % 3 + 1;
        auto changed = pyr;
        for (auto & t : changed.scales[static_cast<std::size_t>(j)]) {
            t = (t + 1 + trial % 7) % 8;
        }
        const auto other = model.forward(build_teacher_sequence(changed, sat), cond).value();
        const auto ids = block_ids_for(lengths);
        for (int p = 0; p < 12; ++p) {
            if (ids[static_cast<std::size_t>(p)] <= j) {
                for (int v = 0; v < 8; ++v) {
                    CHECK(base.at(p, v) == other.at(p, v));
                }
            }
        }
    }
}

TEST_CASE("without positional embeddings a block is permutation-equivariant") {
    nn::Rng rng(26);
    const std::vector<int> lengths{1, 3, 6};
    codec::SatModel sat(tiny_codec(lengths, 0.5), 27);
    auto cfg = tiny_aar(sat, 8, 1, 2);
    cfg.positional = false;
    AarModel model(cfg, 28);
    auto seq = build_teacher_sequence(random_pyramid(lengths, 8, rng), sat);
    const auto cond = model.cond_var(unit_cond(6, 29));
    const auto base = model.forward(seq, cond).value();
    // Reverse block 2 (positions 4..9, inputs rows 3..8).
    auto perm = seq;
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 4; ++c) {
            perm.block_inputs.at(3 + r, c) = seq.block_inputs.at(8 - r, c);
        }
    }
    const auto out = model.forward(perm, cond).value();
    for (int r = 0; r < 6; ++r) {
        for (int v = 0; v < 8; ++v) {
            CHECK(out.at(4 + r, v) == doctest::Approx(base.at(9 - r, v)).epsilon(1e-10));
        }
    }
}

TEST_CASE("cached inference matches the full forward") {
    nn::Rng rng(30);
    const std::vector<int> lengths{1, 2, 4, 6};
    codec::SatModel sat(tiny_codec(lengths, 0.5), 31);
    for (auto mode : {AarMode::next_scale, AarMode::next_token}) {
        for (bool qk : {true, false}) {
            auto cfg = tiny_aar(sat);
            cfg.mode = mode;
            cfg.qk_norm = qk;
            AarModel model(cfg, 32);
            auto pyr = random_pyramid(lengths, 8, rng);
            auto seq = mode == AarMode::next_scale ? build_teacher_sequence(pyr, sat) : build_token_sequence(pyr);
            const Tensor c1 = unit_cond(6, 33);
            const auto full_cond = model.forward(seq, model.cond_var(c1)).value();
            const auto full_null = model.forward(seq, model.null_cond()).value();
            Tensor null_row = model.null_cond().value().reshaped({6});
            InferenceSession sess(model, {c1, null_row});
            std::vector<std::vector<double>> got(2);
            auto take = [&](const std::vector<Tensor> & logits) {
                for (int s = 0; s < 2; ++s) {
                    const auto & st = logits[static_cast<std::size_t>(s)].storage();
                    got[static_cast<std::size_t>(s)].insert(got[static_cast<std::size_t>(s)].end(), st.begin(), st.end());
                }
            };
            take(sess.step(sess.start_rows()));
            if (mode == AarMode::next_scale) {
                int off = 0;
                for (int k = 1; k < 4; ++k) {
                    Tensor in({lengths[static_cast<std::size_t>(k)], 4});
                    std::copy_n(seq.block_inputs.data() + off * 4, in.size(), in.data());
                    off += in.dim(0);
                    const Tensor rows = sess.block_rows(k, in);
                    take(sess.step({rows, rows}));
                }
                CHECK(sess.forward_passes() == 4);
            } else {
                for (int p = 1; p < 13; ++p) {
                    const Tensor row = sess.token_row(p, seq.input_tokens[static_cast<std::size_t>(p - 1)]);
                    take(sess.step({row, row}));
                }
                CHECK(sess.forward_passes() == 13);
            }
            REQUIRE(got[0].size() == full_cond.size());
            for (std::size_t i = 0; i < full_cond.size(); ++i) {
                CHECK(got[0][i] == doctest::Approx(full_cond[i]).epsilon(1e-9));
                CHECK(got[1][i] == doctest::Approx(full_null[i]).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("stage-2 training step") {
    nn::Rng rng(34);
    const std::vector<int> lengths{1, 2, 6};
    codec::SatModel sat(tiny_codec(lengths, 0.5), 35);

    SUBCASE("zero learning rate leaves parameters unchanged") {
        AarModel model(tiny_aar(sat), 36);
        nn::Adam opt(model.params(), {0.9, 0.95, 1e-8, 0.05});
        std::vector<Stage2Example> batch{{build_teacher_sequence(random_pyramid(lengths, 8, rng), sat), unit_cond(6, 37)}};
        std::vector<Tensor> before;
        for (const auto & e : model.params().entries()) {
            before.push_back(e.second.value());
        }
        const double l0 = train_step_stage2(model, opt, batch, 0.0, rng).loss;
        const double l1 = train_step_stage2(model, opt, batch, 0.0, rng).loss;
        CHECK(l0 == l1);
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(model.params().entries()[i].second.value().storage() == before[i].storage());
        }
    }

    SUBCASE("memorises eight pyramids") {
        auto cfg = tiny_aar(sat, 32, 2, 2);
        AarModel model(cfg, 38);
        nn::Adam opt(model.params(), {0.9, 0.95, 1e-8, 0.0});
        std::vector<Stage2Example> batch;
        for (int i = 0; i < 8; ++i) {
            batch.push_back({build_teacher_sequence(random_pyramid(lengths, 8, rng), sat), unit_cond(6, 40 + i)});
        }
        double loss = 0.0;
        for (int step = 0; step < 400 && (step == 0 || loss >= 0.1); ++step) {
            loss = train_step_stage2(model, opt, batch, 3e-3, rng).loss;
        }
        CHECK(loss < 0.1);
    }

    SUBCASE("condition dropout rate") {
        auto cfg = tiny_aar(sat, 8, 1, 1);
        cfg.cfg_drop_prob = 0.1;
        AarModel model(cfg, 39);
        nn::Adam opt(model.params(), {});
        std::vector<Stage2Example> batch(100, {build_teacher_sequence(random_pyramid(lengths, 8, rng), sat), unit_cond(6, 50)});
        int dropped = 0;
        for (int i = 0; i < 100; ++i) {
            dropped += train_step_stage2(model, opt, batch, 0.0, rng).dropped;
        }
        CHECK(std::fabs(dropped / 1e4 - 0.1) < 0.02);
    }
}

TEST_CASE("stub conditioner") {
    StubConditioner cond(32);
    const auto corpus = dsp::synth_corpus(51, 16, 24000, 0.5);
    std::vector<Tensor> e;
    for (const auto & c : corpus) {
        e.push_back(cond.embed(c.clip));
        CHECK(e.back().matrix().norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(cond.embed(corpus[0].clip).storage() == e[0].storage());
    double within = 0.0;
    double between = 0.0;
    int nw = 0;
    int nb = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        for (std::size_t j = i + 1; j < e.size(); ++j) {
            const double s = cosine(e[i], e[j]);
            if (corpus[i].label_id == corpus[j].label_id) {
                within += s;
                ++nw;
            } else {
                between += s;
                ++nb;
            }
        }
    }
    CHECK(between / nb < within / nw);
}
