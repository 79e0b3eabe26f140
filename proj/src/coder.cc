#include "ctc/coder.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/crc.hpp>

namespace ctc {
namespace {

// Lower bound of the normalization interval; the state lives in [L, 256 L).
constexpr std::uint32_t kRansLow = 1u << 23;

}  // namespace

FrequencyTriple quantize_probs(const Triple& p) {
  std::array<std::int64_t, 3> f{};
  std::array<double, 3> rem{};
  std::int64_t sum = 0;
  for (int i = 0; i < 3; ++i) {
    const double scaled = std::clamp(p[i], 0.0, 1.0) * kProbScale;
    const double fl = std::floor(scaled);
    f[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(fl));
    rem[i] = scaled - fl;
    sum += f[i];
  }
  std::int64_t diff = static_cast<std::int64_t>(kProbScale) - sum;
  while (diff > 0) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    ++f[best];
    rem[best] = -1.0;
    --diff;
  }
  while (diff < 0) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (f[i] > f[best]) best = i;
    --f[best];
    ++diff;
  }
  FrequencyTriple out;
  for (int i = 0; i < 3; ++i) out.freq[i] = static_cast<std::uint16_t>(f[i]);
  return out;
}

double code_length_bits(const FrequencyTriple& f, int symbol) {
  return static_cast<double>(kProbBits) - std::log2(static_cast<double>(f.freq[symbol]));
}

void TritEncoder::put(int symbol, const FrequencyTriple& f) {
  symbols_.push_back({static_cast<std::uint16_t>(f.start(symbol)), f.freq[symbol]});
}

std::vector<std::uint8_t> TritEncoder::finish() {
  std::vector<std::uint8_t> reversed;
  reversed.reserve(symbols_.size() / 4 + 8);
  std::uint32_t x = kRansLow;
  for (auto it = symbols_.rbegin(); it != symbols_.rend(); ++it) {
    const std::uint32_t x_max = ((kRansLow >> kProbBits) << 8) * it->freq;
    while (x >= x_max) {
      reversed.push_back(static_cast<std::uint8_t>(x & 0xff));
      x >>= 8;
    }
    x = ((x / it->freq) << kProbBits) + (x % it->freq) + it->start;
  }
  for (int i = 0; i < 4; ++i) {
    reversed.push_back(static_cast<std::uint8_t>(x & 0xff));
    x >>= 8;
  }
  symbols_.clear();
  return {reversed.rbegin(), reversed.rend()};
}

TritDecoder::TritDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  require(bytes_.size() >= 4, ErrorKind::kFormat, "chunk shorter than the coder state");
  for (int i = 0; i < 4; ++i) state_ = (state_ << 8) | bytes_[pos_++];
  require(state_ >= kRansLow, ErrorKind::kFormat, "corrupt coder state");
}

int TritDecoder::get(const FrequencyTriple& f) {
  const std::uint32_t slot = state_ & (kProbScale - 1);
  int symbol = 0;
  std::uint32_t start = 0;
  while (symbol < 2 && slot >= start + f.freq[symbol]) start += f.freq[symbol++];
  state_ = f.freq[symbol] * (state_ >> kProbBits) + slot - start;
  while (state_ < kRansLow) {
    require(pos_ < bytes_.size(), ErrorKind::kFormat, "coder ran past the end of a chunk");
    state_ = (state_ << 8) | bytes_[pos_++];
  }
  return symbol;
}

bool TritDecoder::clean_end() const { return state_ == kRansLow && pos_ == bytes_.size(); }

std::uint16_t trit_checksum(std::span<const std::uint8_t> trits) {
  boost::crc_ccitt_type crc;
  crc.process_bytes(trits.data(), trits.size());
  return static_cast<std::uint16_t>(crc.checksum());
}

void encode_symbols(std::span<const std::uint8_t> trits,
                    std::span<const FrequencyTriple> freqs, std::uint32_t chunk_size,
                    std::uint8_t plane, EncodedSymbols& out) {
  require(trits.size() == freqs.size(), ErrorKind::kInvalidArgument,
          "one frequency triple per symbol is required");
  require(chunk_size > 0, ErrorKind::kInvalidArgument, "chunk size must be positive");
  for (std::size_t begin = 0; begin < trits.size(); begin += chunk_size) {
    const std::size_t end = std::min(trits.size(), begin + chunk_size);
    TritEncoder enc;
    for (std::size_t i = begin; i < end; ++i) {
      require(trits[i] < 3, ErrorKind::kInvalidArgument, "symbol is not a trit");
      enc.put(trits[i], freqs[i]);
    }
    const auto bytes = enc.finish();
    out.chunks.push_back({plane, static_cast<std::uint32_t>(end - begin),
                          static_cast<std::uint32_t>(bytes.size()),
                          trit_checksum(trits.subspan(begin, end - begin))});
    out.payload.insert(out.payload.end(), bytes.begin(), bytes.end());
  }
}

EncodedSymbols encode_symbols(std::span<const std::uint8_t> trits,
                              std::span<const FrequencyTriple> freqs,
                              std::uint32_t chunk_size) {
  EncodedSymbols out;
  encode_symbols(trits, freqs, chunk_size, 0, out);
  return out;
}

std::vector<std::uint8_t> decode_chunk(std::span<const std::uint8_t> bytes,
                                       const ChunkInfo& info,
                                       const std::function<FrequencyTriple(std::size_t)>& freq,
                                       std::size_t first_index) {
  require(bytes.size() == info.bytes, ErrorKind::kFormat, "chunk byte length mismatch");
  TritDecoder dec(bytes);
  std::vector<std::uint8_t> trits(info.trits);
  for (std::size_t i = 0; i < info.trits; ++i)
    trits[i] = static_cast<std::uint8_t>(dec.get(freq(first_index + i)));
  require(dec.clean_end(), ErrorKind::kFormat, "chunk decoder lost synchronization");
  require(trit_checksum(trits) == info.checksum, ErrorKind::kFormat,
          "chunk checksum mismatch");
  return trits;
}

std::vector<std::uint8_t> decode_symbols(
    const EncodedSymbols& stream, const std::function<FrequencyTriple(std::size_t)>& freq,
    std::size_t byte_budget) {
  std::vector<std::uint8_t> out;
  std::size_t offset = 0;
  for (const ChunkInfo& c : stream.chunks) {
    if (offset + c.bytes > byte_budget || offset + c.bytes > stream.payload.size()) break;
    const auto trits = decode_chunk(
        std::span(stream.payload).subspan(offset, c.bytes), c, freq, out.size());
    out.insert(out.end(), trits.begin(), trits.end());
    offset += c.bytes;
  }
  return out;
}

}  // namespace ctc
