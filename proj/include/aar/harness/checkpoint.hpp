#pragma once

#include "aar/nn/layers.hpp"
#include "aar/nn/optim.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aar::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout: "AARCKPT1", u32 version, u64 header length, JSON header, then
// every array's doubles in header order (little endian). A "<file>.sha256"
// sidecar holds the hex digest of the whole file and is checked on load.
struct Checkpoint {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, nn::Tensor>> arrays;

    bool has(const std::string & name) const;
    const nn::Tensor & array(const std::string & name) const;
    void put(const std::string & name, nn::Tensor t);
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path & path);
std::filesystem::path sidecar_path(const std::filesystem::path & path);

// Written to a temporary file and renamed, so an interrupted save keeps the previous checkpoint.
void write_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt);
Checkpoint read_checkpoint(const std::filesystem::path & path);

// Parameter values under "<prefix>.<name>".
void store_params(Checkpoint & ckpt, const std::string & prefix, const nn::ParamStore & params);
void load_params(const Checkpoint & ckpt, const std::string & prefix, nn::ParamStore & params);

// Moments under "<prefix>.m.<i>" / "<prefix>.v.<i>", step count in meta[prefix].
void store_adam(Checkpoint & ckpt, const std::string & prefix, nn::Adam & opt);
void load_adam(const Checkpoint & ckpt, const std::string & prefix, nn::Adam & opt);

std::string rng_state(const nn::Rng & rng);
void restore_rng(nn::Rng & rng, const std::string & state);

} // namespace aar::harness
