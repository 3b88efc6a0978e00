#include "stsg/serialize.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "stsg/errors.hpp"

namespace stsg {

namespace {

constexpr char kMagic[] = "STSG1\n";
constexpr std::size_t kMagicLen = 6;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

bool get_f64(std::istream& is, double& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &u, 8);
    return true;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, kMagicLen);
    for (const auto& [name, t] : params.items()) {  // std::map iterates in name order
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
        for (double v : t.data()) put_f64(os, v);
    }
    if (!os) throw IoError("short write to checkpoint: " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[kMagicLen];
    if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw CheckpointError("bad checkpoint magic in " + path);
    }

    std::set<std::string> seen;
    std::string prev_name;
    while (true) {
        std::uint32_t name_len;
        if (!get_u32(is, name_len)) break;  // clean EOF
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw CheckpointError("truncated checkpoint while reading a parameter name in " + path);
        }
        if (!prev_name.empty() && !(prev_name < name)) {
            throw CheckpointError("checkpoint parameters out of order at '" + name + "' in " + path);
        }
        prev_name = name;
        std::uint32_t rank;
        if (!get_u32(is, rank)) throw CheckpointError("truncated checkpoint at '" + name + "'");
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t e;
            if (!get_u32(is, e)) throw CheckpointError("truncated checkpoint at '" + name + "'");
            shape[d] = e;
        }
        if (!params.contains(name)) {
            throw CheckpointError("checkpoint parameter '" + name + "' does not exist in the model");
        }
        Tensor& t = params.at(name);
        if (t.shape() != shape) {
            throw CheckpointError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                                  " but the model expects " + shape_str(t.shape()));
        }
        auto& data = t.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!get_f64(is, data[i])) {
                throw CheckpointError("truncated checkpoint payload at '" + name + "'");
            }
        }
        seen.insert(name);
    }
    for (const auto& [name, t] : params.items()) {
        if (!seen.count(name)) {
            throw CheckpointError("model parameter '" + name + "' missing from checkpoint " + path);
        }
    }
}

}  // namespace stsg
