#pragma once

#include "aar/codec/sat_model.hpp"

#include <string>
#include <vector>

namespace aar::lm {

enum class AarMode { next_scale, next_token };

std::string to_string(AarMode mode);
AarMode parse_aar_mode(const std::string & name);

// Teacher-forced training example. Positions are laid out block by block:
// block 0 holds the condition (length l_1) and block k holds scale k's inputs.
struct ScaleSequence {
    std::vector<int> lengths;      // l_1..l_K
    nn::Tensor block_inputs;       // next_scale: (N - l_1, d) rows feeding blocks 2..K
    std::vector<int> input_tokens; // next_token: token fed at positions 1..N-1
    std::vector<int> targets;      // N token indices
    std::vector<int> block_ids;    // N, 0-based scale of each target

    int positions() const { return static_cast<int>(targets.size()); }
};

// block_id of every position for a schedule.
std::vector<int> block_ids_for(const std::vector<int> & lengths);

// M[p][q] is true iff block_id(q) <= block_id(p).
std::vector<std::vector<bool>> build_block_mask(const codec::ScaleSchedule & schedule);

// Builds the input rows for block k+1 from the tokens of scale k (0-based k).
// Literal mode: phi_k(interp(interp(lookup(r_k), l_K), l_{k+1})).
// Cumulative mode: interp(sum_{j<=k} phi_j(interp(lookup(r_j), l_K)), l_{k+1}).
class BlockInputBuilder {
public:
    BlockInputBuilder(const codec::SatModel & sat, bool cumulative);

    nn::Tensor next(int scale_index, const std::vector<int> & indices);

private:
    const codec::SatModel & sat_;
    bool cumulative_;
    nn::Tensor accumulated_;
};

ScaleSequence build_teacher_sequence(const codec::TokenPyramid & pyramid, const codec::SatModel & sat,
                                     bool cumulative_inputs = false);

// Scale-major flattening for the next-token baseline.
std::vector<int> flatten_pyramid(const codec::TokenPyramid & pyramid);
codec::TokenPyramid unflatten_tokens(const std::vector<int> & tokens, const std::vector<int> & lengths);
ScaleSequence build_token_sequence(const codec::TokenPyramid & pyramid);

} // namespace aar::lm
