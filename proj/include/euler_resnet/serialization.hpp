#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "euler_resnet/network.hpp"

namespace euler_resnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary parameter file, all fields little-endian:
///
///   offset  size  field
///   0       8     magic "EULRNET\0"
///   8       4     u32 format version (1)
///   12      4     u32 flags: bit 0 use_bn, bits 8..15 activation,
///                 bits 16..23 init rule
///   16      8     u64 depth
///   24      8     u64 width
///   32      8     u64 input_dim
///   40      8     u64 num_classes
///   48      8     u64 seed
///   56      8     f64 h
///   64      8     f64 init_gain
///   72      8     u64 value count N
///   80      8N    f64 values: Network::parameters() in order, then
///                 Network::buffers() in order
///   80+8N   8     u64 FNV-1a 64 hash of bytes [0, 80+8N)
inline constexpr std::uint32_t kParamFormatVersion = 1;

std::vector<std::uint8_t> encode_network(Network& net);
Network decode_network(const std::vector<std::uint8_t>& bytes);

void save_network(Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace euler_resnet
