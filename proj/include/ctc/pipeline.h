#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctc/config.h"
#include "ctc/container.h"
#include "ctc/model_io.h"
#include "ctc/synthetic.h"
#include "ctc/transform.h"

namespace ctc {

// What gets coded: a real latent with its prior, plus the picture it came
// from in image mode.
struct Source {
  RealTensor latent;
  GaussianField field;
  std::optional<RealTensor> image;
  int block = 0;

  bool image_mode() const { return image.has_value(); }
};

Source latent_source(RealTensor y, GaussianField field);
// Block transform with per-channel mean and spread (floored at 0.25) as the prior.
Source image_source(const RealTensor& image, int block);

// Encoder-side schedule of a whole tensor, computed with the same state a
// decoder has at the start of every plane.
struct Plan {
  std::shared_ptr<const GaussianField> field;  // as stored in the header
  std::shared_ptr<const PriorSet> priors;
  IntTensor yhat;
  std::size_t clamped = 0;
  ProgressiveLatent latent;
  std::vector<std::vector<Triple>> coding;  // per plane, per element
  std::vector<double> raw_entropy_bits;     // per plane, sum of H(P) over active trits
  std::vector<double> coded_entropy_bits;   // per plane, sum of -log2 coding prob
  std::vector<PlaneSample> samples;         // filled on request
};

int plan_depth(const RealTensor& centered, const CodecConfig& config);

// `crr` may be null for raw probabilities.
Plan make_plan(const RealTensor& y, const GaussianField& field, int depth,
               const CodecConfig& config, const CrrRouter* crr, bool collect_samples = false);

// The models an encode with this config actually relies on.
ModelSet effective_models(const ModelSet& models, const CodecConfig& config, bool image_mode);

struct PlaneReport {
  int level = 0;
  std::size_t active = 0;
  std::size_t chunks = 0;
  std::size_t bytes = 0;
  double raw_entropy_bits = 0.0;
  double coded_entropy_bits = 0.0;
};

struct Encoded {
  Container container;
  std::vector<std::uint8_t> bytes;
  std::vector<PlaneReport> planes;
  IntTensor yhat;
  std::size_t clamped = 0;
};

Encoded encode(const Source& source, const CodecConfig& config, const ModelSet& models);

struct Budget {
  enum class Kind { kFull, kBytes, kLevel };
  Kind kind = Kind::kFull;
  std::size_t bytes = 0;
  double level = 0.0;

  static Budget full() { return {}; }
  static Budget of_bytes(std::size_t n) { return {Kind::kBytes, n, 0.0}; }
  static Budget of_level(double l) { return {Kind::kLevel, 0, l}; }
  // "full", a byte count, or L<level> such as L3.5.
  static Budget parse(const std::string& text);
  std::string to_string() const;
};

struct DecodeToggles {
  bool use_cdr = true;
  bool use_refit = true;
};

// Decodes a container chunk by chunk; every prefix of the chunk sequence is
// a valid stopping point.
class ProgressiveDecoder {
 public:
  ProgressiveDecoder(Container container, const ModelSet& models, DecodeToggles toggles = {});

  const StreamHeader& header() const { return container_.header; }
  std::size_t available_chunks() const { return container_.symbols.chunks.size(); }
  std::size_t chunks_decoded() const { return next_chunk_; }

  // Decodes forward until `chunks` chunks are done. Never goes back.
  void advance_to(std::size_t chunks);
  // Advances as far as `budget` allows.
  void advance(const Budget& budget);

  DecodePosition position() const;
  double level() const;
  bool complete() const { return plane_ > depth_; }
  // Trimmed container size for the chunks decoded so far.
  std::size_t consumed_bytes() const;

  std::span<const PrefixInterval> prefix() const { return prefix_; }
  RealTensor conditional_means() const;
  // Centered latent after distortion refinement.
  RealTensor refined_centered() const;
  // Uncentered latent fed to the synthesis.
  RealTensor latent() const;
  // Image mode only.
  RealTensor image() const;
  // Exact quantized tensor; only once every plane is decoded.
  IntTensor quantized() const;

  const ModelSet& models() const { return models_; }

 private:
  void start_plane();
  void decode_next_chunk();
  double level_after(std::size_t chunk) const;

  Container container_;
  ModelSet models_;
  DecodeToggles toggles_;
  std::shared_ptr<const GaussianField> field_;
  std::unique_ptr<PriorSet> priors_;
  int depth_;
  OrderMode order_mode_;
  bool use_crr_;
  std::vector<std::size_t> chunk_offsets_;

  std::vector<PrefixInterval> prefix_;
  int plane_ = 1;              // plane under way, depth + 1 when finished
  std::size_t plane_done_ = 0;  // trits of plane_ decoded
  std::vector<Triple> coding_;
  std::vector<std::uint32_t> order_;
  std::size_t next_chunk_ = 0;
};

struct Decoded {
  DecodePosition position;
  double level = 0.0;
  std::size_t bytes = 0;  // trimmed container size
  std::size_t chunks = 0;
  RealTensor latent;      // uncentered, refined
  std::optional<RealTensor> image;
};

Decoded decode_at(std::span<const std::uint8_t> stream, const Budget& budget,
                  const ModelSet& models, DecodeToggles toggles = {});

// Training corpora -----------------------------------------------------------

struct TrainingAsset {
  RealTensor y;
  std::shared_ptr<const GaussianField> field;
  std::optional<RealTensor> image;
};

TrainingAsset training_asset(const Source& source);

// Depth shared by a corpus: the fixed depth when configured, otherwise the
// most common automatic depth.
int corpus_depth(std::span<const TrainingAsset> assets, const CodecConfig& config);

// Plane samples from raw-probability plans, grouped by rate-model slot.
std::array<std::vector<PlaneSample>, 3> crr_dataset(std::span<const TrainingAsset> assets,
                                                    const CodecConfig& config, int depth);

// Assets scheduled as the deployed encoder would with the given rate models.
std::vector<CdrAsset> cdr_dataset(std::span<const TrainingAsset> assets,
                                  const CodecConfig& config, int depth, const CrrRouter* crr);

// One refit sample per image with the refined latent at each weighted level.
std::vector<RefitSample> refit_dataset(std::span<const TrainingAsset> assets,
                                       const CodecConfig& config, int depth,
                                       const ModelSet& models);

// Refined latent of a scheduled tensor at a whole level.
RealTensor refined_at_level(const ProgressiveLatent& latent, const PriorSet& priors,
                            const GaussianField& field, int level, const CdrRouter* cdr);

}  // namespace ctc
