#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctc/coder.h"
#include "ctc/latent_model.h"
#include "ctc/tensor.h"

namespace ctc {

inline constexpr std::uint8_t kStreamVersion = 1;

// Mode byte: bit 0 per-element parameters, bit 1 raster order, bit 2 raw
// probabilities as priority basis, bit 3 image mode, bit 4 rate model used,
// bits 5-7 log2 of the transform block size.
struct StreamMode {
  bool per_element = false;
  bool raster_order = false;
  bool raw_priority = false;
  bool image = false;
  bool crr = false;
  int block_log2 = 0;

  std::uint8_t pack() const;
  static StreamMode unpack(std::uint8_t byte);
  friend bool operator==(const StreamMode&, const StreamMode&) = default;
};

struct StreamHeader {
  StreamMode mode;
  Shape shape;
  int depth = 1;
  std::uint32_t chunk_size = 1024;
  std::vector<float> means;
  std::vector<float> scales;
  std::uint64_t model_checksum = 0;

  GaussianField field() const;
  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct Container {
  StreamHeader header;
  EncodedSymbols symbols;
};

// Bytes before the chunk table.
std::size_t header_bytes(const StreamHeader& h);
inline constexpr std::size_t kChunkEntryBytes = 11;
// CRC-32 of everything from the magic through the chunk table.
inline constexpr std::size_t kHeaderChecksumBytes = 4;
std::size_t serialized_size(const StreamHeader& h, std::span<const ChunkInfo> chunks,
                            std::size_t payload_bytes);
std::size_t serialized_size(const Container& c);

std::vector<std::uint8_t> serialize(const Container& c);

// Accepts a payload shorter than the table promises and keeps the chunks
// that are complete; the table is trimmed to match.
Container parse(std::span<const std::uint8_t> bytes);

// Largest chunk count whose trimmed container fits in `budget` bytes.
std::size_t chunks_within(const Container& c, std::size_t budget);
Container truncate(const Container& c, std::size_t chunks);

}  // namespace ctc
