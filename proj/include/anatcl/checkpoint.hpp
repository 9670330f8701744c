#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "anatcl/config.hpp"
#include "anatcl/error.hpp"
#include "anatcl/io.hpp"
#include "anatcl/model.hpp"

// On-disk layout, all integers little-endian:
//
//   "ANCL"                      magic
//   u16   version               kCheckpointVersion
//   u32   epoch
//   u32   n, n bytes            encoder + training config as key = value text
//   u32   P                     parameter tensor count
//   P x tensor                  parameters in Parameters::tensors() order
//   u64   Adam step
//   P x tensor                  first moments, same order
//   P x tensor                  second moments, same order
//   u32   n, n bytes            mt19937_64 state text
//   u32   CRC-32 of every preceding byte
//
// tensor: u32 rank, rank x u64 dims, u64 count, count x f64 (IEEE-754 bits).

namespace anatcl::checkpoint {

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr char kMagic[4] = {'A', 'N', 'C', 'L'};

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.append(c, n);
  }
  template <class Int>
  void uint(Int v) {
    for (std::size_t i = 0; i < sizeof(Int); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void text(std::string_view s) {
    uint(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const numgrad::Tensor& t) {
    uint(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) uint(static_cast<std::uint64_t>(d));
    uint(static_cast<std::uint64_t>(t.size()));
    for (double v : t.data()) f64(v);
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  template <class Int>
  Int uint() {
    need(sizeof(Int));
    Int v = 0;
    for (std::size_t i = 0; i < sizeof(Int); ++i)
      v |= static_cast<Int>(static_cast<Int>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    pos_ += sizeof(Int);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string text() {
    const auto n = uint<std::uint32_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  numgrad::Tensor tensor() {
    const auto rank = uint<std::uint32_t>();
    if (rank > 2) throw corrupt("tensor rank " + std::to_string(rank));
    numgrad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(uint<std::uint64_t>()));
    const auto count = uint<std::uint64_t>();
    if (count != numgrad::element_count(shape)) throw corrupt("tensor element count disagrees with its shape");
    need(count * 8);
    std::vector<double> values(count);
    for (auto& v : values) v = f64();
    return numgrad::Tensor(std::move(shape), std::move(values));
  }
  std::size_t position() const noexcept { return pos_; }

  Error corrupt(const std::string& what) const { return Error(ErrorKind::corrupt_file, source_ + ": " + what); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) throw corrupt("truncated at byte " + std::to_string(pos_));
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks so large files are fine.
  std::size_t at = 0;
  while (at < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - at, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + at), static_cast<uInt>(n));
    at += n;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::string serialize(const model::Checkpoint& ck) {
  detail::Writer w;
  w.bytes(kMagic, 4);
  w.uint(kCheckpointVersion);
  w.uint(ck.epoch);
  w.text(config::checkpoint_config_text(ck.encoder, ck.train));
  const auto tensors = ck.params.tensors();
  w.uint(static_cast<std::uint32_t>(tensors.size()));
  for (const auto* t : tensors) w.tensor(*t);
  w.uint(ck.adam.step);
  for (const auto& t : ck.adam.m) w.tensor(t);
  for (const auto& t : ck.adam.v) w.tensor(t);
  w.text(ck.rng_state);
  const std::uint32_t crc = detail::crc32_of(w.buffer());
  w.uint(crc);
  return std::move(w.buffer());
}

inline model::Checkpoint deserialize(std::string_view data, const std::string& source = "checkpoint") {
  detail::Reader head(data, source);
  if (data.size() < 6 || std::memcmp(data.data(), kMagic, 4) != 0) throw head.corrupt("not a checkpoint (bad magic)");
  head.uint<std::uint32_t>();
  const auto version = head.uint<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::version_mismatch, source + ": format version " + std::to_string(version) +
                                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  if (data.size() < 10) throw head.corrupt("truncated");
  const std::string_view body = data.substr(0, data.size() - 4);
  detail::Reader tail(data.substr(data.size() - 4), source);
  if (tail.uint<std::uint32_t>() != detail::crc32_of(body)) throw head.corrupt("checksum mismatch");

  detail::Reader r(body, source);
  r.uint<std::uint32_t>();
  r.uint<std::uint16_t>();
  model::Checkpoint ck;
  ck.epoch = r.uint<std::uint32_t>();
  try {
    const auto cfg = config::parse_config_text(r.text(), source + " config");
    ck.encoder = cfg.encoder;
    ck.train = cfg.train;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::corrupt_file) throw;
    throw r.corrupt(std::string("embedded config: ") + e.what());
  }
  ck.params = model::init(ck.encoder, model::regressor_width(ck.train.loss.variant, ck.train.measures.size()));
  auto slots = ck.params.tensors();
  const auto count = r.uint<std::uint32_t>();
  if (count != slots.size()) throw r.corrupt("expected " + std::to_string(slots.size()) + " parameter tensors");
  auto read_into = [&](numgrad::Tensor& dst) {
    auto t = r.tensor();
    if (t.shape() != dst.shape()) throw r.corrupt("tensor shape disagrees with the stored config");
    dst = std::move(t);
  };
  for (auto* t : slots) read_into(*t);
  ck.adam = model::adam_init(ck.params);
  ck.adam.step = r.uint<std::uint64_t>();
  for (auto& t : ck.adam.m) read_into(t);
  for (auto& t : ck.adam.v) read_into(t);
  ck.rng_state = r.text();
  if (r.position() != body.size()) throw r.corrupt("trailing bytes before checksum");
  return ck;
}

inline void save_checkpoint(const model::Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize(ck));
}

inline model::Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize(io::read_file(path, ErrorKind::io_error), path.filename().string());
}

}  // namespace anatcl::checkpoint
