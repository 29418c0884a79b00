#pragma once

// Bit-exact persistence. The tensor container is the wire format shared by
// datasets, checkpoints and benchmark assets:
//   magic "S2C1" | version u32 | entry count u32
//   per entry: name length u16, UTF-8 name, rank u8, extents u32[rank],
//              dtype u8 (0 = f32 little-endian), payload
// Config files are canonical key=value text hashed to a 64-bit digest.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2c/tensor.hpp"

namespace s2c {

struct NamedTensor {
    std::string name;
    Tensor32 tensor;
};

struct ContainerError : std::runtime_error {
    enum class Kind { io, bad_magic, bad_version, bad_length, malformed, duplicate_name };
    Kind kind;
    ContainerError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::vector<NamedTensor>& entries, const std::string& path);
std::vector<NamedTensor> read_container(const std::string& path);

// parse from an in-memory image (the fuzz harness drives this directly)
std::vector<NamedTensor> parse_container(const std::vector<unsigned char>& bytes);

}  // namespace s2c
