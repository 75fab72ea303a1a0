#include "euler_resnet/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace euler_resnet {

namespace {

constexpr char kMagic[8] = {'E', 'U', 'L', 'R', 'N', 'E', 'T', '\0'};
constexpr std::size_t kHeaderSize = 80;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("parameter file truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::vector<std::uint8_t> encode_network(Network& net) {
  const NetworkConfig& c = net.config();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kParamFormatVersion);
  const std::uint32_t flags = (c.use_bn ? 1u : 0u) |
                              (static_cast<std::uint32_t>(c.activation) << 8) |
                              (static_cast<std::uint32_t>(c.init_rule) << 16);
  put_u32(out, flags);
  put_u64(out, static_cast<std::uint64_t>(c.depth));
  put_u64(out, static_cast<std::uint64_t>(c.width));
  put_u64(out, static_cast<std::uint64_t>(c.input_dim));
  put_u64(out, static_cast<std::uint64_t>(c.num_classes));
  put_u64(out, c.seed);
  put_f64(out, c.h);
  put_f64(out, c.init_gain);

  std::vector<double> values;
  for (const auto& p : net.parameters()) values.insert(values.end(), p.value.begin(), p.value.end());
  for (const auto& b : net.buffers()) values.insert(values.end(), b.value.begin(), b.value.end());
  put_u64(out, values.size());
  for (double v : values) put_f64(out, v);
  put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

Network decode_network(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize + 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
    throw FormatError("not a parameter file (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= std::uint64_t(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body))
    throw FormatError("parameter file hash mismatch");

  Reader r(bytes);
  r.u64();  // magic
  if (r.u32() != kParamFormatVersion) throw FormatError("unsupported parameter file version");
  const std::uint32_t flags = r.u32();
  NetworkConfig c;
  c.use_bn = (flags & 1u) != 0;
  const auto activation = (flags >> 8) & 0xFFu;
  const auto init_rule = (flags >> 16) & 0xFFu;
  if (activation > 1 || init_rule > 1) throw FormatError("bad flags in parameter file");
  c.activation = static_cast<Activation>(activation);
  c.init_rule = static_cast<InitRule>(init_rule);
  c.depth = static_cast<int>(r.u64());
  c.width = static_cast<int>(r.u64());
  c.input_dim = static_cast<int>(r.u64());
  c.num_classes = static_cast<int>(r.u64());
  c.seed = r.u64();
  c.h = r.f64();
  c.init_gain = r.f64();
  const std::uint64_t count = r.u64();

  Network net(c);
  std::size_t expected = 0;
  for (const auto& p : net.parameters()) expected += p.value.size();
  for (const auto& b : net.buffers()) expected += b.value.size();
  if (count != expected || r.pos() + 8 * count != body)
    throw FormatError("parameter count does not match the header shape");
  for (auto& p : net.parameters())
    for (double& v : p.value) v = r.f64();
  for (auto& b : net.buffers())
    for (double& v : b.value) v = r.f64();
  return net;
}

void save_network(Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_network(net);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_network(bytes);
}

}  // namespace euler_resnet
