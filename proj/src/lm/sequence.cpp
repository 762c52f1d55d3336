#include "aar/lm/sequence.hpp"

#include "aar/error.hpp"
#include "aar/nn/interp.hpp"

#include <algorithm>

namespace aar::lm {

std::string to_string(AarMode mode) { return mode == AarMode::next_scale ? "next_scale" : "next_token"; }

AarMode parse_aar_mode(const std::string & name) {
    if (name == "next_scale") {
        return AarMode::next_scale;
    }
    if (name == "next_token") {
        return AarMode::next_token;
    }
    throw ValidationError("unknown model mode '" + name + "' (expected next_scale or next_token)");
}

std::vector<int> block_ids_for(const std::vector<int> & lengths) {
    std::vector<int> ids;
    for (std::size_t k = 0; k < lengths.size(); ++k) {
        ids.insert(ids.end(), static_cast<std::size_t>(lengths[k]), static_cast<int>(k));
    }
    return ids;
}

std::vector<std::vector<bool>> build_block_mask(const codec::ScaleSchedule & schedule) {
    codec::validate(schedule);
    const auto ids = block_ids_for(schedule.lengths);
    std::vector<std::vector<bool>> mask(ids.size(), std::vector<bool>(ids.size()));
    for (std::size_t p = 0; p < ids.size(); ++p) {
        for (std::size_t q = 0; q < ids.size(); ++q) {
            mask[p][q] = ids[q] <= ids[p];
        }
    }
    return mask;
}

BlockInputBuilder::BlockInputBuilder(const codec::SatModel & sat, bool cumulative)
    : sat_(sat), cumulative_(cumulative) {}

nn::Tensor BlockInputBuilder::next(int scale_index, const std::vector<int> & indices) {
    const auto & sched = sat_.schedule();
    require(scale_index >= 0 && scale_index + 1 < sched.scales(), "block input requested past the last scale");
    require(static_cast<int>(indices.size()) == sched.length(scale_index), "token count does not match the schedule");
    const int l_next = sched.length(scale_index + 1);
    if (cumulative_) {
        const nn::Tensor h = sat_.scale_contribution(scale_index, indices);
        if (accumulated_.empty()) {
            accumulated_ = h;
        } else {
            for (std::size_t i = 0; i < h.size(); ++i) {
                accumulated_[i] += h[i];
            }
        }
        return nn::interpolate_rows(accumulated_, l_next);
    }
    const nn::Tensor rows = codec::gather(sat_.codebook(scale_index), indices);
    const nn::Tensor up = nn::interpolate_rows(nn::interpolate_rows(rows, sched.top()), l_next);
    return sat_.phi().apply(scale_index, up);
}

ScaleSequence build_teacher_sequence(const codec::TokenPyramid & pyramid, const codec::SatModel & sat,
                                     bool cumulative_inputs) {
    sat.validate_pyramid(pyramid);
    ScaleSequence seq;
    seq.lengths = pyramid.lengths();
    seq.block_ids = block_ids_for(seq.lengths);
    for (const auto & s : pyramid.scales) {
        seq.targets.insert(seq.targets.end(), s.begin(), s.end());
    }
    const int d = sat.latent_dim();
    const int rows = seq.positions() - seq.lengths.front();
    seq.block_inputs = nn::Tensor({rows, d});
    BlockInputBuilder builder(sat, cumulative_inputs);
    int offset = 0;
    for (int k = 0; k + 1 < pyramid.depth(); ++k) {
        const nn::Tensor block = builder.next(k, pyramid.scales[static_cast<std::size_t>(k)]);
        std::copy(block.storage().begin(), block.storage().end(),
                  seq.block_inputs.storage().begin() + static_cast<std::ptrdiff_t>(offset) * d);
        offset += block.dim(0);
    }
    return seq;
}

std::vector<int> flatten_pyramid(const codec::TokenPyramid & pyramid) {
    std::vector<int> out;
    for (const auto & s : pyramid.scales) {
        out.insert(out.end(), s.begin(), s.end());
    }
    return out;
}

codec::TokenPyramid unflatten_tokens(const std::vector<int> & tokens, const std::vector<int> & lengths) {
    codec::TokenPyramid p;
    std::size_t at = 0;
    for (int l : lengths) {
        require(at + static_cast<std::size_t>(l) <= tokens.size(), "too few tokens for the schedule");
        p.scales.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                              tokens.begin() + static_cast<std::ptrdiff_t>(at + l));
        at += static_cast<std::size_t>(l);
    }
    require(at == tokens.size(), "too many tokens for the schedule");
    return p;
}

ScaleSequence build_token_sequence(const codec::TokenPyramid & pyramid) {
    ScaleSequence seq;
    seq.lengths = pyramid.lengths();
    seq.block_ids = block_ids_for(seq.lengths);
    seq.targets = flatten_pyramid(pyramid);
    seq.input_tokens.assign(seq.targets.begin(), seq.targets.end() - 1);
    return seq;
}

} // namespace aar::lm
