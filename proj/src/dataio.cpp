#include "s2c/dataio.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <set>

namespace s2c {

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Cursor {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw ContainerError(ContainerError::Kind::bad_length,
                                 std::string("container truncated while reading ") + what);
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(buf[pos + static_cast<std::size_t>(i)]) << (8 * i);
        }
        pos += 4;
        return v;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf[pos++];
    }
};

}  // namespace

void write_container(const std::vector<NamedTensor>& entries, const std::string& path) {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (!seen.insert(e.name).second) {
            throw ContainerError(ContainerError::Kind::duplicate_name,
                                 "duplicate tensor name: " + e.name);
        }
        if (e.name.size() > 0xffff) {
            throw ContainerError(ContainerError::Kind::malformed, "tensor name too long");
        }
    }

    std::vector<unsigned char> out;
    out.push_back('S');
    out.push_back('2');
    out.push_back('C');
    out.push_back('1');
    put_u32(out, kContainerVersion);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        out.push_back(static_cast<unsigned char>(e.tensor.rank()));
        for (int ext : e.tensor.shape) {
            put_u32(out, static_cast<std::uint32_t>(ext));
        }
        out.push_back(0);  // dtype: f32 little-endian
        for (float v : e.tensor.data) {
            put_f32(out, v);
        }
    }

    FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) {
        throw ContainerError(ContainerError::Kind::io, "cannot open for write: " + path);
    }
    const std::size_t written = out.empty() ? 0 : std::fwrite(out.data(), 1, out.size(), f);
    if (written != out.size() || std::fflush(f) != 0 || ::fsync(fileno(f)) != 0) {
        std::fclose(f);
        throw ContainerError(ContainerError::Kind::io, "short write: " + path);
    }
    std::fclose(f);
}

std::vector<NamedTensor> parse_container(const std::vector<unsigned char>& bytes) {
    Cursor cur{bytes};
    cur.need(4, "magic");
    if (std::memcmp(bytes.data(), "S2C1", 4) != 0) {
        throw ContainerError(ContainerError::Kind::bad_magic, "bad container magic");
    }
    cur.pos = 4;
    const std::uint32_t version = cur.u32("version");
    if (version != kContainerVersion) {
        throw ContainerError(ContainerError::Kind::bad_version,
                             "unsupported container version " + std::to_string(version));
    }
    const std::uint32_t count = cur.u32("entry count");
    std::vector<NamedTensor> out;
    std::set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = cur.u16("name length");
        cur.need(name_len, "name");
        std::string name(reinterpret_cast<const char*>(bytes.data()) + cur.pos, name_len);
        cur.pos += name_len;
        if (!seen.insert(name).second) {
            throw ContainerError(ContainerError::Kind::malformed, "duplicate tensor name: " + name);
        }
        const std::uint8_t rank = cur.u8("rank");
        if (rank > 8) {
            throw ContainerError(ContainerError::Kind::malformed, "implausible tensor rank");
        }
        Shape shape;
        std::uint64_t numel = 1;
        for (int r = 0; r < rank; ++r) {
            const std::uint32_t ext = cur.u32("extent");
            if (ext == 0 || ext > (1u << 28)) {
                throw ContainerError(ContainerError::Kind::malformed, "implausible tensor extent");
            }
            numel *= ext;
            if (numel > (1ull << 32)) {
                throw ContainerError(ContainerError::Kind::bad_length, "tensor payload too large");
            }
            shape.push_back(static_cast<int>(ext));
        }
        const std::uint8_t dtype = cur.u8("dtype");
        if (dtype != 0) {
            throw ContainerError(ContainerError::Kind::malformed, "unknown dtype tag");
        }
        cur.need(static_cast<std::size_t>(numel) * 4, "payload");
        Tensor32 t(shape);
        for (std::uint64_t k = 0; k < numel; ++k) {
            std::uint32_t bits = cur.u32("payload");
            float v;
            std::memcpy(&v, &bits, 4);
            t.data[static_cast<std::size_t>(k)] = v;
        }
        out.push_back(NamedTensor{std::move(name), std::move(t)});
    }
    if (cur.pos != bytes.size()) {
        throw ContainerError(ContainerError::Kind::bad_length, "trailing bytes after final entry");
    }
    return out;
}

std::vector<NamedTensor> read_container(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (f == nullptr) {
        throw ContainerError(ContainerError::Kind::io, "cannot open for read: " + path);
    }
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size < 0 ? 0 : size));
    if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
        std::fclose(f);
        throw ContainerError(ContainerError::Kind::io, "short read: " + path);
    }
    std::fclose(f);
    return parse_container(bytes);
}

}  // namespace s2c
