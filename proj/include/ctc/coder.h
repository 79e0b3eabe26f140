#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ctc/tensor.h"

namespace ctc {

inline constexpr int kProbBits = 12;
inline constexpr std::uint32_t kProbScale = 1u << kProbBits;

// Integer frequencies summing to kProbScale, each at least 1.
struct FrequencyTriple {
  std::array<std::uint16_t, 3> freq{1366, 1365, 1365};

  std::uint32_t start(int symbol) const {
    std::uint32_t s = 0;
    for (int i = 0; i < symbol; ++i) s += freq[i];
    return s;
  }
  friend bool operator==(const FrequencyTriple&, const FrequencyTriple&) = default;
};

// Largest-remainder rounding of p * 4096 with a floor of 1 per symbol.
FrequencyTriple quantize_probs(const Triple& p);

// Ideal code length of `symbol` under `f`, in bits.
double code_length_bits(const FrequencyTriple& f, int symbol);

// Byte-wise rANS over ternary symbols with a 32-bit state. One instance
// codes one independently flushed chunk.
class TritEncoder {
 public:
  void put(int symbol, const FrequencyTriple& f);
  std::size_t size() const { return symbols_.size(); }
  // Encodes the buffered symbols and returns the chunk bytes.
  std::vector<std::uint8_t> finish();

 private:
  struct Pending {
    std::uint16_t start;
    std::uint16_t freq;
  };
  std::vector<Pending> symbols_;
};

class TritDecoder {
 public:
  explicit TritDecoder(std::span<const std::uint8_t> bytes);
  int get(const FrequencyTriple& f);
  // True when the state returned to its initial value and every byte was used.
  bool clean_end() const;

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t state_ = 0;
};

// CRC-16/CCITT over the trit values of a chunk.
std::uint16_t trit_checksum(std::span<const std::uint8_t> trits);

struct ChunkInfo {
  std::uint8_t plane = 0;
  std::uint32_t trits = 0;
  std::uint32_t bytes = 0;
  std::uint16_t checksum = 0;

  friend bool operator==(const ChunkInfo&, const ChunkInfo&) = default;
};

struct EncodedSymbols {
  std::vector<ChunkInfo> chunks;
  std::vector<std::uint8_t> payload;
};

// Splits the sequence into chunks of chunk_size symbols, each flushed
// independently, and appends them to `out` tagged with `plane`.
void encode_symbols(std::span<const std::uint8_t> trits,
                    std::span<const FrequencyTriple> freqs, std::uint32_t chunk_size,
                    std::uint8_t plane, EncodedSymbols& out);

EncodedSymbols encode_symbols(std::span<const std::uint8_t> trits,
                              std::span<const FrequencyTriple> freqs,
                              std::uint32_t chunk_size);

// Decodes one chunk, pulling frequencies for each symbol from `next_freq`.
// Throws a format error on desynchronization or checksum mismatch.
std::vector<std::uint8_t> decode_chunk(std::span<const std::uint8_t> bytes,
                                       const ChunkInfo& info,
                                       const std::function<FrequencyTriple(std::size_t)>& freq,
                                       std::size_t first_index);

// Decodes every whole chunk that fits within `byte_budget` payload bytes.
// freq(i) must return the frequency triple of the i-th symbol overall.
std::vector<std::uint8_t> decode_symbols(
    const EncodedSymbols& stream, const std::function<FrequencyTriple(std::size_t)>& freq,
    std::size_t byte_budget = SIZE_MAX);

}  // namespace ctc
