#include "gcopt/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace gcopt {

namespace {

constexpr char kMagic[4] = {'G', 'C', 'K', '1'};

void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    std::ifstream in;
    std::string path;
    std::size_t offset = 0;

    void read(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n) {
            throw std::runtime_error(path + ": truncated checkpoint at byte offset " +
                                     std::to_string(offset + static_cast<std::size_t>(in.gcount())));
        }
        offset += n;
    }

    std::uint16_t u16() {
        unsigned char b[2];
        read(b, 2);
        return static_cast<std::uint16_t>(b[0] | (std::uint16_t(b[1]) << 8));
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
};

void write_table(std::ostream& out, const std::vector<CheckpointTensor>& table) {
    put_u32(out, static_cast<std::uint32_t>(table.size()));
    for (const auto& t : table) {
        put_u16(out, static_cast<std::uint16_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        const std::uint8_t ndim = static_cast<std::uint8_t>(t.dims.size());
        out.write(reinterpret_cast<const char*>(&ndim), 1);
        for (auto d : t.dims) put_u32(out, d);
        const std::uint8_t tag = static_cast<std::uint8_t>(t.dtype);
        out.write(reinterpret_cast<const char*>(&tag), 1);
        out.write(reinterpret_cast<const char*>(t.bytes.data()),
                  static_cast<std::streamsize>(t.bytes.size()));
    }
}

std::vector<CheckpointTensor> read_table(Reader& r) {
    const std::uint32_t count = r.u32();
    std::vector<CheckpointTensor> table(count);
    for (auto& t : table) {
        const std::uint16_t len = r.u16();
        t.name.resize(len);
        r.read(t.name.data(), len);
        std::uint8_t ndim = 0;
        r.read(&ndim, 1);
        if (ndim == 0) {
            throw std::runtime_error(r.path + ": tensor '" + t.name + "' has zero rank");
        }
        t.dims.resize(ndim);
        for (auto& d : t.dims) d = r.u32();
        std::uint8_t tag = 0;
        r.read(&tag, 1);
        if (tag > 1) {
            throw std::runtime_error(r.path + ": tensor '" + t.name + "' has unknown dtype tag " +
                                     std::to_string(tag));
        }
        t.dtype = static_cast<Dtype>(tag);
        const std::size_t elem = t.dtype == Dtype::f32 ? 4 : 8;
        t.bytes.resize(t.element_count() * elem);
        r.read(t.bytes.data(), t.bytes.size());
    }
    return table;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, 4);
    put_u32(out, ckpt.version);
    write_table(out, ckpt.model_tensors);
    write_table(out, ckpt.opt_tensors);
    put_u64(out, ckpt.opt_step);
    out.write(reinterpret_cast<const char*>(&ckpt.opt_poisoned), 1);
    for (auto s : ckpt.rng_state) put_u64(out, s);
    put_u32(out, ckpt.epoch);
    put_u64(out, ckpt.global_step);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r;
    r.in.open(path, std::ios::binary);
    r.path = path;
    if (!r.in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path + ": bad checkpoint magic (want GCK1)");
    }
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != Checkpoint::kVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(ckpt.version));
    }
    ckpt.model_tensors = read_table(r);
    ckpt.opt_tensors = read_table(r);
    ckpt.opt_step = r.u64();
    r.read(&ckpt.opt_poisoned, 1);
    for (auto& s : ckpt.rng_state) s = r.u64();
    ckpt.epoch = r.u32();
    ckpt.global_step = r.u64();
    return ckpt;
}

}  // namespace gcopt
