#include "aar/codec/quantize.hpp"

#include "aar/error.hpp"
#include "aar/nn/interp.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

namespace aar::codec {

LookupResult vq_lookup(const nn::Tensor & x, const nn::Tensor & codebook) {
    require(x.rank() == 2 && codebook.rank() == 2, "vq_lookup needs rank-2 inputs");
    require(x.dim(1) == codebook.dim(1), "vq_lookup dimension mismatch");
    const int l = x.dim(0);
    const int d = x.dim(1);
    const int v = codebook.dim(0);
    require(v >= 1, "empty codebook");
    LookupResult out;
    out.indices.resize(static_cast<std::size_t>(l));
    out.z = nn::Tensor({l, d});
    for (int i = 0; i < l; ++i) {
        const double * xr = x.data() + static_cast<std::size_t>(i) * d;
        double best = std::numeric_limits<double>::infinity();
        int best_idx = 0;
        for (int c = 0; c < v; ++c) {
            const double * cr = codebook.data() + static_cast<std::size_t>(c) * d;
            double dist = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = xr[j] - cr[j];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_idx = c;
            }
        }
        out.indices[static_cast<std::size_t>(i)] = best_idx;
        std::copy_n(codebook.data() + static_cast<std::size_t>(best_idx) * d, d,
                    out.z.data() + static_cast<std::size_t>(i) * d);
    }
    return out;
}

nn::Tensor gather(const nn::Tensor & codebook, const std::vector<int> & indices) {
    const int v = codebook.dim(0);
    const int d = codebook.dim(1);
    nn::Tensor z({static_cast<int>(indices.size()), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        require(indices[i] >= 0 && indices[i] < v, "token index out of range");
        std::copy_n(codebook.data() + static_cast<std::size_t>(indices[i]) * d, d, z.data() + i * d);
    }
    return z;
}

nn::Tensor interpolate_tokens(const nn::Tensor & f, int target_len) { return nn::interpolate_rows(f, target_len); }

std::vector<int> TokenPyramid::lengths() const {
    std::vector<int> out;
    for (const auto & s : scales) {
        out.push_back(static_cast<int>(s.size()));
    }
    return out;
}

int TokenPyramid::total() const {
    int n = 0;
    for (const auto & s : scales) {
        n += static_cast<int>(s.size());
    }
    return n;
}

namespace {

constexpr std::uint16_t kPyramidVersion = 1;

void put(std::vector<std::uint8_t> & out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

std::uint64_t get(const std::vector<std::uint8_t> & in, std::size_t & pos, int bytes) {
    if (pos + static_cast<std::size_t>(bytes) > in.size()) {
        throw FormatError("truncated pyramid file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
    }
    pos += static_cast<std::size_t>(bytes);
    return v;
}

} // namespace

void write_pyramid(const std::filesystem::path & path, const TokenPyramid & pyramid, int vocab) {
    require(vocab >= 1 && vocab <= 65536, "vocab must fit u16 indices");
    require(pyramid.depth() >= 1 && pyramid.depth() <= 65535, "pyramid depth out of range");
    std::vector<std::uint8_t> out{'S', 'A', 'T', 'P'};
    put(out, kPyramidVersion, 2);
    put(out, static_cast<std::uint64_t>(pyramid.depth()), 2);
    put(out, static_cast<std::uint64_t>(vocab), 4);
    for (const auto & s : pyramid.scales) {
        put(out, s.size(), 4);
    }
    for (const auto & s : pyramid.scales) {
        for (int idx : s) {
            require(idx >= 0 && idx < vocab, "token index out of range");
            put(out, static_cast<std::uint64_t>(idx), 2);
        }
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f.write(reinterpret_cast<const char *>(out.data()), static_cast<std::streamsize>(out.size()));
}

TokenPyramid read_pyramid(const std::filesystem::path & path, int * vocab) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (in.size() < 4 || std::memcmp(in.data(), "SATP", 4) != 0) {
        throw FormatError(path.string() + " is not a pyramid file");
    }
    std::size_t pos = 4;
    const auto version = get(in, pos, 2);
    if (version != kPyramidVersion) {
        throw FormatError("unsupported pyramid version " + std::to_string(version));
    }
    const auto k = static_cast<int>(get(in, pos, 2));
    const auto v = static_cast<int>(get(in, pos, 4));
    TokenPyramid p;
    p.scales.resize(static_cast<std::size_t>(k));
    for (auto & s : p.scales) {
        s.resize(static_cast<std::size_t>(get(in, pos, 4)));
    }
    for (auto & s : p.scales) {
        for (int & idx : s) {
            idx = static_cast<int>(get(in, pos, 2));
            if (idx >= v) {
                throw FormatError("pyramid index exceeds vocab");
            }
        }
    }
    if (vocab) {
        *vocab = v;
    }
    return p;
}

std::vector<double> codebook_utilization(const std::vector<TokenPyramid> & pyramids, int vocab) {
    require(!pyramids.empty(), "utilization needs at least one pyramid");
    const int k = pyramids.front().depth();
    std::vector<double> out;
    for (int s = 0; s < k; ++s) {
        std::vector<char> seen(static_cast<std::size_t>(vocab), 0);
        for (const auto & p : pyramids) {
            require(p.depth() == k, "pyramids with different depths");
            for (int idx : p.scales[static_cast<std::size_t>(s)]) {
                require(idx >= 0 && idx < vocab, "token index out of range");
                seen[static_cast<std::size_t>(idx)] = 1;
            }
        }
        out.push_back(static_cast<double>(std::count(seen.begin(), seen.end(), 1)) / vocab);
    }
    return out;
}

} // namespace aar::codec
