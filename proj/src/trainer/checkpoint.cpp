// SPDX-License-Identifier: Apache-2.0
#include "mobo/trainer/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "mobo/errors.hpp"

namespace mobo::trainer {

namespace fs = std::filesystem;

std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr unsigned char kMagic[4] = {'M', 'O', 'B', 'O'};
constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
 public:
  std::vector<unsigned char> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void str64(const std::string& s) {
    u64(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }
  const unsigned char* at(std::size_t p) const { return b_.data() + p; }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw IntegrityError("checkpoint truncated at offset " + std::to_string(pos_) + " while reading " + what +
                           " (need " + std::to_string(n) + " bytes, " + std::to_string(b_.size() - pos_) + " left)");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const CheckpointData& ck) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  const std::size_t header_start = w.bytes.size();
  w.str64(ck.config);
  w.u64(ck.stage);
  w.u64(ck.step);
  w.str64(ck.rng_state);
  w.u32(crc32_of(w.bytes.data() + header_start, w.bytes.size() - header_start));
  w.u64(ck.tensors.size());
  for (const auto& nt : ck.tensors) {
    const std::size_t start = w.bytes.size();
    w.u32(static_cast<std::uint32_t>(nt.name.size()));
    w.bytes.insert(w.bytes.end(), nt.name.begin(), nt.name.end());
    w.u8(kDtypeF64);
    const auto& shape = nt.tensor.shape();
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u64(d);
    for (double v : nt.tensor.data()) w.f64(v);
    w.u32(crc32_of(w.bytes.data() + start, w.bytes.size() - start));
  }
  return std::move(w.bytes);
}

CheckpointData decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  Reader r(bytes);
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointData ck;
  const std::size_t header_start = r.pos();
  ck.config = r.str(r.u64("config length"), "config");
  ck.stage = r.u64("stage");
  ck.step = r.u64("step");
  ck.rng_state = r.str(r.u64("rng length"), "rng state");
  const std::size_t header_end = r.pos();
  const std::uint32_t header_crc = r.u32("header checksum");
  if (crc32_of(r.at(header_start), header_end - header_start) != header_crc) {
    throw IntegrityError("checkpoint header checksum mismatch at offset " + std::to_string(header_end));
  }
  const std::uint64_t count = r.u64("tensor count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    const std::uint32_t name_len = r.u32("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const std::uint8_t dtype = r.u8("dtype");
    const std::uint8_t rank = r.u8("rank");
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.u64("dims"));
      numel *= shape.back();
    }
    if (dtype != kDtypeF64) {
      throw IntegrityError("tensor record at offset " + std::to_string(start) + " has unknown dtype " +
                           std::to_string(dtype));
    }
    if (numel > (bytes.size() - r.pos()) / 8) {
      throw IntegrityError("checkpoint truncated at offset " + std::to_string(r.pos()) + " while reading payload of '" +
                           name + "'");
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = std::bit_cast<double>(r.u64("payload"));
    const std::size_t end = r.pos();
    const std::uint32_t crc = r.u32("tensor checksum");
    if (crc32_of(r.at(start), end - start) != crc) {
      throw IntegrityError("checksum mismatch for tensor '" + name + "' (record at offset " + std::to_string(start) +
                           ")");
    }
    ck.tensors.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw IntegrityError("trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  return ck;
}

void save_checkpoint(const fs::path& path, const CheckpointData& ck) {
  const auto bytes = encode_checkpoint(ck);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out.flush()) throw IoError("write failed for checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointData load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mobo::trainer
