#include "aar/harness/checkpoint.hpp"

#include "aar/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace aar::harness {

namespace {

constexpr char kMagic[8] = {'A', 'A', 'R', 'C', 'K', 'P', 'T', '1'};

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw Error("SHA-256 initialisation failed");
        }
    }
    void update(const void * data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) {
            throw Error("SHA-256 update failed");
        }
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) {
            throw Error("SHA-256 finalisation failed");
        }
        std::ostringstream os;
        for (unsigned int i = 0; i < len; ++i) {
            os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
        }
        return os.str();
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string read_all(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

bool Checkpoint::has(const std::string & name) const {
    for (const auto & [n, t] : arrays) {
        if (n == name) {
            return true;
        }
    }
    return false;
}

const nn::Tensor & Checkpoint::array(const std::string & name) const {
    for (const auto & [n, t] : arrays) {
        if (n == name) {
            return t;
        }
    }
    throw FormatError("checkpoint has no array '" + name + "'");
}

void Checkpoint::put(const std::string & name, nn::Tensor t) {
    for (auto & [n, existing] : arrays) {
        if (n == name) {
            existing = std::move(t);
            return;
        }
    }
    arrays.emplace_back(name, std::move(t));
}

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path & path) { return sha256_hex(read_all(path)); }

std::filesystem::path sidecar_path(const std::filesystem::path & path) {
    return std::filesystem::path(path.string() + ".sha256");
}

void write_checkpoint(const std::filesystem::path & path, const Checkpoint & ckpt) {
    nlohmann::json header = ckpt.meta;
    header["version"] = kCheckpointVersion;
    nlohmann::json list = nlohmann::json::array();
    for (const auto & [name, t] : ckpt.arrays) {
        list.push_back({{"name", name}, {"shape", t.shape()}});
    }
    header["arrays"] = list;
    const std::string text = header.dump();

    std::string bytes(kMagic, sizeof kMagic);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t header_len = text.size();
    bytes.append(reinterpret_cast<const char *>(&version), sizeof version);
    bytes.append(reinterpret_cast<const char *>(&header_len), sizeof header_len);
    bytes += text;
    for (const auto & [name, t] : ckpt.arrays) {
        bytes.append(reinterpret_cast<const char *>(t.data()), t.size() * sizeof(double));
    }

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("cannot write " + tmp.string());
        }
    }
    const auto side_tmp = std::filesystem::path(sidecar_path(path).string() + ".tmp");
    {
        std::ofstream out(side_tmp, std::ios::trunc);
        out << sha256_hex(bytes) << "  " << path.filename().string() << '\n';
        if (!out) {
            throw IoError("cannot write " + side_tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
    std::filesystem::rename(side_tmp, sidecar_path(path));
}

Checkpoint read_checkpoint(const std::filesystem::path & path) {
    if (!std::filesystem::exists(path)) {
        throw IoError("checkpoint not found: " + path.string());
    }
    const std::string bytes = read_all(path);
    const auto side = sidecar_path(path);
    if (!std::filesystem::exists(side)) {
        throw FormatError("checkpoint digest file missing: " + side.string());
    }
    std::string expected = read_all(side);
    expected = expected.substr(0, expected.find_first_of(" \t\r\n"));
    if (sha256_hex(bytes) != expected) {
        throw FormatError("checkpoint digest mismatch: " + path.string());
    }

    const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < fixed || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError("not a checkpoint: " + path.string());
    }
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
    std::memcpy(&header_len, bytes.data() + sizeof kMagic + sizeof version, sizeof header_len);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    if (header_len > bytes.size() - fixed) {
        throw FormatError("truncated checkpoint header");
    }
    Checkpoint ckpt;
    try {
        ckpt.meta = nlohmann::json::parse(bytes.substr(fixed, header_len));
    } catch (const nlohmann::json::exception & e) {
        throw FormatError(std::string("bad checkpoint header: ") + e.what());
    }
    std::size_t offset = fixed + header_len;
    for (const auto & entry : ckpt.meta.at("arrays")) {
        const auto shape = entry.at("shape").get<std::vector<int>>();
        nn::Tensor t(shape);
        const std::size_t n = t.size() * sizeof(double);
        if (offset + n > bytes.size()) {
            throw FormatError("truncated checkpoint data");
        }
        std::memcpy(t.data(), bytes.data() + offset, n);
        offset += n;
        ckpt.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
    if (offset != bytes.size()) {
        throw FormatError("trailing bytes in checkpoint");
    }
    ckpt.meta.erase("arrays");
    return ckpt;
}

void store_params(Checkpoint & ckpt, const std::string & prefix, const nn::ParamStore & params) {
    for (const auto & [name, var] : params.entries()) {
        ckpt.put(prefix + "." + name, var.value());
    }
}

void load_params(const Checkpoint & ckpt, const std::string & prefix, nn::ParamStore & params) {
    for (const auto & [name, var] : params.entries()) {
        const nn::Tensor & src = ckpt.array(prefix + "." + name);
        if (src.shape() != var.value().shape()) {
            throw ValidationError("checkpoint array " + prefix + "." + name + " has shape " + src.shape_string() +
                                  ", model expects " + var.value().shape_string());
        }
        nn::Var v = var;
        v.mutable_value() = src;
    }
}

void store_adam(Checkpoint & ckpt, const std::string & prefix, nn::Adam & opt) {
    auto & m = opt.first_moments();
    auto & v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        ckpt.put(prefix + ".m." + std::to_string(i), m[i]);
        ckpt.put(prefix + ".v." + std::to_string(i), v[i]);
    }
    ckpt.meta[prefix] = {{"steps", opt.steps()}, {"count", m.size()}};
}

void load_adam(const Checkpoint & ckpt, const std::string & prefix, nn::Adam & opt) {
    auto & m = opt.first_moments();
    auto & v = opt.second_moments();
    if (ckpt.meta.at(prefix).at("count").get<std::size_t>() != m.size()) {
        throw ValidationError("optimizer state in checkpoint does not match the model");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto & sm = ckpt.array(prefix + ".m." + std::to_string(i));
        const auto & sv = ckpt.array(prefix + ".v." + std::to_string(i));
        require(sm.shape() == m[i].shape() && sv.shape() == v[i].shape(), "optimizer moment shape mismatch");
        m[i] = sm;
        v[i] = sv;
    }
    opt.set_steps(ckpt.meta.at(prefix).at("steps").get<long long>());
}

std::string rng_state(const nn::Rng & rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void restore_rng(nn::Rng & rng, const std::string & state) {
    std::istringstream is(state);
    is >> rng;
    if (!is) {
        throw FormatError("bad RNG state in checkpoint");
    }
}

} // namespace aar::harness
