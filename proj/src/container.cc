#include "ctc/container.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include <boost/crc.hpp>

namespace ctc {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'C', '1'};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }

 private:
  std::uint64_t le(int n) {
    require(remaining() >= static_cast<std::size_t>(n), ErrorKind::kFormat,
            "stream ends inside the header");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::size_t param_count(const StreamHeader& h) {
  return h.mode.per_element ? h.shape.size() : static_cast<std::size_t>(h.shape.channels);
}

}  // namespace

std::uint8_t StreamMode::pack() const {
  require(block_log2 >= 0 && block_log2 <= 7, ErrorKind::kInvalidArgument,
          "block size out of range");
  return static_cast<std::uint8_t>(per_element | raster_order << 1 | raw_priority << 2 |
                                   image << 3 | crr << 4 | block_log2 << 5);
}

StreamMode StreamMode::unpack(std::uint8_t b) {
  return {(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0, (b & 16) != 0, b >> 5};
}

GaussianField StreamHeader::field() const {
  std::vector<double> m(means.begin(), means.end());
  std::vector<double> s(scales.begin(), scales.end());
  return mode.per_element ? GaussianField::per_element(shape, std::move(m), std::move(s))
                          : GaussianField::per_channel(shape, std::move(m), std::move(s));
}

std::size_t header_bytes(const StreamHeader& h) {
  return 4 + 1 + 1 + 2 * 3 + 1 + 4 + 8 * param_count(h) + 8 + 4;
}

std::size_t serialized_size(const StreamHeader& h, std::span<const ChunkInfo> chunks,
                            std::size_t payload_bytes) {
  return header_bytes(h) + kChunkEntryBytes * chunks.size() + kHeaderChecksumBytes +
         payload_bytes;
}

std::size_t serialized_size(const Container& c) {
  return serialized_size(c.header, c.symbols.chunks, c.symbols.payload.size());
}

std::vector<std::uint8_t> serialize(const Container& c) {
  const StreamHeader& h = c.header;
  require(h.shape.valid() && h.shape.channels <= 0xffff && h.shape.height <= 0xffff &&
              h.shape.width <= 0xffff,
          ErrorKind::kInvalidArgument, "tensor dimensions do not fit the header");
  require(h.depth >= 1 && h.depth <= 19, ErrorKind::kInvalidArgument, "depth out of range");
  require(h.means.size() == param_count(h) && h.scales.size() == param_count(h),
          ErrorKind::kInvalidArgument, "parameter block size mismatch");
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size(c));
  Writer w(out);
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u8(kStreamVersion);
  w.u8(h.mode.pack());
  w.u16(static_cast<std::uint16_t>(h.shape.channels));
  w.u16(static_cast<std::uint16_t>(h.shape.height));
  w.u16(static_cast<std::uint16_t>(h.shape.width));
  w.u8(static_cast<std::uint8_t>(h.depth));
  w.u32(h.chunk_size);
  for (std::size_t i = 0; i < h.means.size(); ++i) {
    w.f32(h.means[i]);
    w.f32(h.scales[i]);
  }
  w.u64(h.model_checksum);
  w.u32(static_cast<std::uint32_t>(c.symbols.chunks.size()));
  std::size_t payload = 0;
  for (const ChunkInfo& ch : c.symbols.chunks) {
    w.u8(ch.plane);
    w.u32(ch.trits);
    w.u32(ch.bytes);
    w.u16(ch.checksum);
    payload += ch.bytes;
  }
  require(payload == c.symbols.payload.size(), ErrorKind::kInvalidArgument,
          "chunk table does not cover the payload");
  w.u32(crc32(out));
  out.insert(out.end(), c.symbols.payload.begin(), c.symbols.payload.end());
  return out;
}

Container parse(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char ch : kMagic)
    require(r.u8() == static_cast<std::uint8_t>(ch), ErrorKind::kFormat, "bad stream magic");
  const std::uint8_t version = r.u8();
  require(version == kStreamVersion, ErrorKind::kFormat,
          "unsupported stream version " + std::to_string(version));
  Container c;
  StreamHeader& h = c.header;
  h.mode = StreamMode::unpack(r.u8());
  h.shape.channels = r.u16();
  h.shape.height = r.u16();
  h.shape.width = r.u16();
  require(h.shape.valid(), ErrorKind::kFormat, "stream declares an empty tensor");
  h.depth = r.u8();
  require(h.depth >= 1 && h.depth <= 19, ErrorKind::kFormat, "stream depth out of range");
  h.chunk_size = r.u32();
  require(h.chunk_size > 0, ErrorKind::kFormat, "stream declares a zero chunk size");
  const std::size_t params = param_count(h);
  require(r.remaining() >= 8 * params, ErrorKind::kFormat, "stream ends inside the parameters");
  h.means.resize(params);
  h.scales.resize(params);
  for (std::size_t i = 0; i < params; ++i) {
    h.means[i] = r.f32();
    h.scales[i] = r.f32();
    require(std::isfinite(h.means[i]) && std::isfinite(h.scales[i]) && h.scales[i] > 0.0f,
            ErrorKind::kFormat, "stream carries an invalid prior parameter");
  }
  h.model_checksum = r.u64();
  const std::uint32_t count = r.u32();
  require(r.remaining() / kChunkEntryBytes >= count, ErrorKind::kFormat,
          "stream ends inside the chunk table");
  std::vector<ChunkInfo> table(count);
  int last_plane = 0;
  std::size_t promised = 0;
  for (ChunkInfo& ch : table) {
    ch.plane = r.u8();
    ch.trits = r.u32();
    ch.bytes = r.u32();
    ch.checksum = r.u16();
    require(ch.plane >= 1 && ch.plane <= h.depth && ch.plane >= last_plane, ErrorKind::kFormat,
            "chunk table planes out of order");
    require(ch.trits > 0 && ch.trits <= h.chunk_size && ch.bytes >= 4, ErrorKind::kFormat,
            "malformed chunk table entry");
    require(ch.trits <= h.shape.size(), ErrorKind::kFormat, "chunk larger than the tensor");
    last_plane = ch.plane;
    promised += ch.bytes;
  }
  const std::size_t table_end = r.position();
  require(r.u32() == crc32(bytes.first(table_end)), ErrorKind::kFormat,
          "header checksum mismatch");
  const std::size_t available = r.remaining();
  require(available <= promised, ErrorKind::kFormat, "trailing bytes after the payload");
  std::size_t used = 0;
  for (const ChunkInfo& ch : table) {
    if (used + ch.bytes > available) break;
    c.symbols.chunks.push_back(ch);
    used += ch.bytes;
  }
  c.symbols.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.position()),
                           bytes.begin() + static_cast<std::ptrdiff_t>(r.position() + used));
  return c;
}

std::size_t chunks_within(const Container& c, std::size_t budget) {
  std::size_t size = header_bytes(c.header) + kHeaderChecksumBytes;
  std::size_t k = 0;
  for (const ChunkInfo& ch : c.symbols.chunks) {
    size += kChunkEntryBytes + ch.bytes;
    if (size > budget) break;
    ++k;
  }
  return k;
}

Container truncate(const Container& c, std::size_t chunks) {
  Container out;
  out.header = c.header;
  chunks = std::min(chunks, c.symbols.chunks.size());
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < chunks; ++i) {
    out.symbols.chunks.push_back(c.symbols.chunks[i]);
    bytes += c.symbols.chunks[i].bytes;
  }
  out.symbols.payload.assign(c.symbols.payload.begin(),
                             c.symbols.payload.begin() + static_cast<std::ptrdiff_t>(bytes));
  return out;
}

}  // namespace ctc
