#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ctc/cdr.h"
#include "ctc/crr.h"
#include "ctc/transform.h"

namespace ctc {

enum class ModelKind : std::uint8_t { kCrr = 1, kCdr = 2, kSynthesis = 3 };

// Everything a decoder needs besides the stream. Models are stored as f32,
// so sets built in memory are rounded before use to match what a loader sees.
struct ModelSet {
  TemperatureBounds bounds;
  CrrRouter crr;
  CdrRouter cdr;
  std::optional<SynthesisWeights> synthesis;

  bool empty() const { return crr.empty() && cdr.empty() && !synthesis; }
  void round_to_float();
  // CRC-64 over the serialized models without their per-file checksums; 0
  // for an empty set.
  std::uint64_t checksum() const;
};

std::uint64_t crc64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> serialize_crr(const CrrModel& model, int slot,
                                        const TemperatureBounds& bounds);
std::vector<std::uint8_t> serialize_cdr(const CdrModel& model, int slot);
std::vector<std::uint8_t> serialize_synthesis(const SynthesisWeights& weights);

struct LoadedModel {
  ModelKind kind = ModelKind::kCrr;
  int slot = 0;
  TemperatureBounds bounds;
  std::optional<CrrModel> crr;
  std::optional<CdrModel> cdr;
  std::optional<SynthesisWeights> synthesis;
};

LoadedModel parse_model(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Directory layout: crr_<slot>.ctcm, cdr_<slot>.ctcm, synthesis.ctcm. Missing
// files leave the slot empty; a missing directory is an error.
void save_models(const ModelSet& models, const std::filesystem::path& dir);
ModelSet load_models(const std::filesystem::path& dir);

}  // namespace ctc
