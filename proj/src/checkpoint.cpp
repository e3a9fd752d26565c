#include "cyc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cyc/error.hpp"

namespace cyc {

namespace {

constexpr char kMagic[4] = {'C', 'Y', 'C', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Everything after the magic funnels through the writer so the trailing
// checksum (sum of those bytes mod 2^64) covers the whole record.
struct SummingWriter {
  std::ostream& os;
  std::uint64_t checksum = 0;

  void bytes(const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) checksum += b[i];
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct SummingReader {
  std::istream& is;
  std::uint64_t offset = 0;
  std::uint64_t checksum = 0;

  void bytes(void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
      throw Error(Error::Kind::format,
                  "checkpoint truncated at byte " +
                      std::to_string(offset + static_cast<std::uint64_t>(
                                                  is.gcount())));
    }
    offset += n;
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) checksum += b[i];
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw Error(Error::Kind::data, "cannot open for writing: " + path);
  }
  os.write(kMagic, 4);
  SummingWriter w{os};
  w.u32(ckpt.format_version);
  w.u64(ckpt.config.size());
  w.bytes(ckpt.config.data(), ckpt.config.size());
  w.u64(ckpt.epoch);
  w.f64(ckpt.val_accuracy);
  w.u64(ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    w.u64(name.size());
    w.bytes(name.data(), name.size());
    w.u64(tensor.rank());
    for (std::size_t d = 0; d < tensor.rank(); ++d) w.u64(tensor.extent(d));
    for (std::size_t i = 0; i < tensor.size(); ++i) w.f64(tensor[i]);
  }
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) {
    b[i] = static_cast<unsigned char>(w.checksum >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(b), 8);
  os.flush();
  if (!os) {
    throw Error(Error::Kind::data, "write failed: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(Error::Kind::data, "cannot open checkpoint: " + path);
  }
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(Error::Kind::format,
                "bad magic at byte 0 (not a checkpoint file)");
  }
  SummingReader r{is};
  r.offset = 4;

  Checkpoint ckpt;
  ckpt.format_version = r.u32();
  if (ckpt.format_version != kCheckpointVersion) {
    throw Error(Error::Kind::compatibility,
                "unsupported checkpoint version " +
                    std::to_string(ckpt.format_version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t config_len = r.u64();
  if (config_len > (1ull << 24)) {
    throw Error(Error::Kind::format,
                "checkpoint claims a " + std::to_string(config_len) +
                    "-byte config snapshot");
  }
  ckpt.config.resize(config_len);
  if (config_len > 0) r.bytes(ckpt.config.data(), config_len);
  ckpt.epoch = r.u64();
  ckpt.val_accuracy = r.f64();
  const std::uint64_t count = r.u64();
  if (count > (1ull << 16)) {
    throw Error(Error::Kind::format,
                "checkpoint claims " + std::to_string(count) + " tensors");
  }
  ckpt.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.u64();
    if (name_len > (1ull << 20)) {
      throw Error(Error::Kind::format,
                  "checkpoint tensor name of " + std::to_string(name_len) +
                      " bytes");
    }
    std::string name(name_len, '\0');
    if (name_len > 0) r.bytes(name.data(), name_len);
    const std::uint64_t rank = r.u64();
    if (rank > 4) {
      throw Error(Error::Kind::format,
                  "checkpoint tensor '" + name + "' claims rank " +
                      std::to_string(rank));
    }
    // Desk-scale models stay far below 2^27 values per tensor; anything
    // larger is a corrupt length field, refused before allocation.
    constexpr std::uint64_t kMaxElems = 1ull << 27;
    Shape shape(rank);
    std::size_t total = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
      if (shape[d] == 0 || shape[d] > kMaxElems ||
          total > kMaxElems / shape[d]) {
        throw Error(Error::Kind::format,
                    "checkpoint tensor '" + name + "' claims implausible shape");
      }
      total *= shape[d];
    }
    Tensor t = Tensor::zeros(shape);
    for (std::size_t e = 0; e < total; ++e) t[e] = r.f64();
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }

  const std::uint64_t computed = r.checksum;
  const std::uint64_t checksum_at = r.offset;
  const std::uint64_t stored = r.u64();
  if (stored != computed) {
    throw Error(Error::Kind::format,
                "checkpoint checksum mismatch at byte " +
                    std::to_string(checksum_at) + ": stored " +
                    std::to_string(stored) + ", computed " +
                    std::to_string(computed));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(Error::Kind::format,
                "trailing bytes after checkpoint checksum at byte " +
                    std::to_string(r.offset));
  }
  return ckpt;
}

Checkpoint snapshot_params(const std::vector<Param*>& params,
                           const std::string& config, std::size_t epoch,
                           double val_accuracy) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.epoch = epoch;
  ckpt.val_accuracy = val_accuracy;
  ckpt.tensors.reserve(params.size());
  for (const Param* p : params) {
    ckpt.tensors.emplace_back(p->name, p->value);
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt,
                    const std::vector<Param*>& params) {
  for (Param* p : params) {
    const Tensor* t = ckpt.find(p->name);
    if (t == nullptr) {
      throw Error(Error::Kind::compatibility,
                  "checkpoint lacks tensor '" + p->name + "'");
    }
    if (t->shape() != p->value.shape()) {
      throw Error(Error::Kind::compatibility,
                  "checkpoint tensor '" + p->name + "' has shape " +
                      shape_str(t->shape()) + ", model expects " +
                      shape_str(p->value.shape()));
    }
    p->value = *t;
  }
}

}  // namespace cyc
