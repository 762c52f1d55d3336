#include "aar/metrics/metrics.hpp"

#include "aar/dsp/segment.hpp"
#include "aar/error.hpp"
#include "aar/loss/losses.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace aar::metrics {

namespace {

void require_same_length(const dsp::AudioClip & a, const dsp::AudioClip & b) {
    require(a.samples.size() == b.samples.size(), "distance needs clips of equal length");
    require(a.sample_rate == b.sample_rate, "distance needs clips with the same sample rate");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd & m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

double mel_distance(const dsp::AudioClip & a, const dsp::AudioClip & b, const dsp::SpectralConfig & cfg) {
    require_same_length(a, b);
    nn::NoGradGuard guard;
    return loss::loss_freq_terms(nn::constant(dsp::audio_tensor(a)), nn::constant(dsp::audio_tensor(b)), cfg).l1.item();
}

double stft_distance(const dsp::AudioClip & a, const dsp::AudioClip & b, const dsp::SpectralConfig & cfg) {
    require_same_length(a, b);
    dsp::validate(cfg);
    double total = 0.0;
    for (int i = 0; i < cfg.n_scales(); ++i) {
        const int win = cfg.window_sizes[static_cast<std::size_t>(i)];
        const nn::Tensor sa = dsp::stft(a, win, cfg.hop(i));
        const nn::Tensor sb = dsp::stft(b, win, cfg.hop(i));
        const std::size_t plane = sa.size() / 2;
        double acc = 0.0;
        for (std::size_t j = 0; j < plane; ++j) {
            const double ma = std::log1p(std::hypot(sa[j], sa[plane + j]));
            const double mb = std::log1p(std::hypot(sb[j], sb[plane + j]));
            acc += std::fabs(ma - mb);
        }
        total += acc / static_cast<double>(plane);
    }
    return total;
}

FrechetResult frechet_distance(const EmbeddingSet & p, const EmbeddingSet & q, double jitter) {
    require(p.vectors.rank() == 2 && q.vectors.rank() == 2, "embedding sets must be (n, e) matrices");
    require(p.vectors.dim(1) == q.vectors.dim(1), "embedding sets have different dimensions");
    require(p.vectors.dim(0) >= 2 && q.vectors.dim(0) >= 2, "Frechet distance needs at least two vectors per set");
    require(p.vectors.all_finite() && q.vectors.all_finite(), "embedding sets must be finite");
    auto stats = [](const nn::Tensor & t, Eigen::VectorXd & mu, Eigen::MatrixXd & cov) {
        const Eigen::MatrixXd x = t.matrix();
        mu = x.colwise().mean().transpose();
        const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
        cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
    };
    Eigen::VectorXd mp, mq;
    Eigen::MatrixXd cp, cq;
    stats(p.vectors, mp, cp);
    stats(q.vectors, mq, cq);
    FrechetResult r;
    const double tol = 1e-12 * std::max({1.0, cp.trace(), cq.trace()});
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(cp, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eq(cq, Eigen::EigenvaluesOnly);
    if (ep.eigenvalues().minCoeff() <= tol || eq.eigenvalues().minCoeff() <= tol) {
        r.degenerate = true;
        cp.diagonal().array() += jitter;
        cq.diagonal().array() += jitter;
    }
    const Eigen::MatrixXd sp = psd_sqrt(cp);
    const Eigen::MatrixXd inner = sp * cq * sp;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    r.value = (mp - mq).squaredNorm() + cp.trace() + cq.trace() - 2.0 * tr_sqrt;
    return r;
}

dsp::AudioClip reconstruct_clip(const codec::SatModel & model, const dsp::AudioClip & clip,
                                std::vector<codec::TokenPyramid> * pyramids) {
    require(clip.sample_rate == model.config().sample_rate, "clip sample rate does not match the codec");
    std::vector<dsp::AudioClip> out;
    for (const auto & seg : dsp::segment(clip, model.config().window_seconds)) {
        auto pyr = model.encode_audio(seg);
        out.push_back(model.decode_audio(pyr));
        if (pyramids) {
            pyramids->push_back(std::move(pyr));
        }
    }
    return dsp::reassemble(out, clip.samples.size());
}

ReconstructionReport eval_reconstruction(const codec::SatModel & model, const std::vector<dsp::AudioClip> & clips,
                                         const dsp::SpectralConfig & cfg) {
    ReconstructionReport rep;
    for (const auto & clip : clips) {
        const std::size_t before = rep.pyramids.size();
        const dsp::AudioClip rec = reconstruct_clip(model, clip, &rep.pyramids);
        ClipReconstruction c;
        c.samples = clip.samples.size();
        c.windows = static_cast<int>(rep.pyramids.size() - before);
        c.tokens = c.windows * model.schedule().total();
        c.mel = mel_distance(clip, rec, cfg);
        c.stft = stft_distance(clip, rec, cfg);
        rep.mean_mel += c.mel;
        rep.mean_stft += c.stft;
        rep.total_tokens += c.tokens;
        rep.clips.push_back(c);
    }
    if (!rep.clips.empty()) {
        rep.mean_mel /= static_cast<double>(rep.clips.size());
        rep.mean_stft /= static_cast<double>(rep.clips.size());
    }
    rep.utilization = codec::codebook_utilization(rep.pyramids, model.vocab());
    return rep;
}

} // namespace aar::metrics
