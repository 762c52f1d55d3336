#include "aar/loss/discriminator.hpp"

#include "aar/error.hpp"

#include <algorithm>
#include <string>

namespace aar::loss {

StftDiscriminator::StftDiscriminator(const DiscriminatorConfig & cfg, std::uint64_t seed) : cfg_(cfg) {
    require(!cfg_.windows.empty(), "discriminator needs at least one window");
    require(cfg_.channels >= 1 && cfg_.layers >= 0, "invalid discriminator size");
    nn::Rng rng(seed);
    for (std::size_t t = 0; t < cfg_.windows.size(); ++t) {
        Tower tower;
        tower.window = cfg_.windows[t];
        const std::string p = "disc.w" + std::to_string(tower.window);
        const int c = cfg_.channels;
        tower.convs.emplace_back(params_, p + ".in", 2, c, 3, 9, 1, 1, rng);
        for (int l = 0; l < cfg_.layers; ++l) {
            tower.convs.emplace_back(params_, p + ".down" + std::to_string(l), c, c, 3, 9, 1, 2, rng);
        }
        tower.convs.emplace_back(params_, p + ".mix", c, c, 3, 3, 1, 1, rng);
        tower.convs.emplace_back(params_, p + ".out", c, 1, 3, 3, 1, 1, rng);
        towers_.push_back(std::move(tower));
    }
}

std::vector<nn::Var> StftDiscriminator::forward(const nn::Var & audio) const {
    const int samples = static_cast<int>(audio.value().size());
    const int largest = *std::max_element(cfg_.windows.begin(), cfg_.windows.end());
    require(samples >= largest, "clip shorter than the largest discriminator window");
    std::vector<nn::Var> out;
    for (const auto & tower : towers_) {
        nn::Var h = nn::stft(audio, tower.window, tower.window / 4);
        for (std::size_t i = 0; i < tower.convs.size(); ++i) {
            h = tower.convs[i](h);
            if (i + 1 < tower.convs.size()) {
                h = nn::leaky_relu(h, 0.2);
            }
        }
        out.push_back(nn::reshape(h, {h.dim(1), h.dim(2)}));
    }
    return out;
}

std::vector<std::pair<int, int>> StftDiscriminator::output_shapes(int samples) const {
    std::vector<std::pair<int, int>> out;
    for (const auto & tower : towers_) {
        int h = 1 + (samples - tower.window) / (tower.window / 4);
        int w = tower.window / 2 + 1;
        for (const auto & conv : tower.convs) {
            const int kh = conv.weight.dim(2);
            const int kw = conv.weight.dim(3);
            h = (h + 2 * conv.pad_h - kh) / conv.stride_h + 1;
            w = (w + 2 * conv.pad_w - kw) / conv.stride_w + 1;
        }
        out.emplace_back(h, w);
    }
    return out;
}

} // namespace aar::loss
