#include "ctc/pipeline.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "ctc/parallel.h"

namespace ctc {
namespace {

GaussianField expand_per_element(const GaussianField& g) {
  if (g.mode() == ParamMode::kPerElement) return g;
  std::vector<double> m(g.shape().size()), s(g.shape().size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = g.mean(i);
    s[i] = g.scale(i);
  }
  return GaussianField::per_element(g.shape(), std::move(m), std::move(s));
}

RealTensor centered(const RealTensor& y, const GaussianField& g) {
  RealTensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] - g.mean(i);
  return out;
}

RealTensor uncentered(RealTensor x, const GaussianField& g) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += g.mean(i);
  return x;
}

void apply_trits(std::vector<PrefixInterval>& prefix, const TritPlane& plane) {
  for (std::size_t i = 0; i < prefix.size(); ++i) prefix[i] = prefix[i].child(plane.trits[i]);
}

}  // namespace

Source latent_source(RealTensor y, GaussianField field) {
  require(y.shape() == field.shape(), ErrorKind::kInvalidArgument,
          "latent and prior shapes differ");
  return {std::move(y), std::move(field), std::nullopt, 0};
}

Source image_source(const RealTensor& image, int block) {
  const LinearTransform t(block);
  RealTensor y = t.analyze(image);
  const Shape s = y.shape();
  std::vector<double> means(s.channels), scales(s.channels);
  for (int c = 0; c < s.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < s.plane_size(); ++i) sum += y[c * s.plane_size() + i];
    means[c] = sum / static_cast<double>(s.plane_size());
    for (std::size_t i = 0; i < s.plane_size(); ++i) {
      const double d = y[c * s.plane_size() + i] - means[c];
      sq += d * d;
    }
    scales[c] = std::max(std::sqrt(sq / static_cast<double>(s.plane_size())), 0.25);
  }
  Source src{std::move(y), GaussianField::per_channel(s, std::move(means), std::move(scales)),
             image, block};
  return src;
}

int plan_depth(const RealTensor& c, const CodecConfig& config) {
  return config.fixed_depth > 0 ? config.fixed_depth : choose_depth(c, config.max_depth);
}

Plan make_plan(const RealTensor& y, const GaussianField& field, int depth,
               const CodecConfig& config, const CrrRouter* crr, bool collect_samples) {
  require(y.shape() == field.shape(), ErrorKind::kInvalidArgument,
          "latent and prior shapes differ");
  Plan p;
  GaussianField g = field.rounded_to_float();
  if (config.param_mode == ParamMode::kPerElement) g = expand_per_element(g);
  p.field = std::make_shared<const GaussianField>(std::move(g));
  p.priors = std::make_shared<const PriorSet>(*p.field, depth);
  QuantizedLatent q = quantize_center_at_depth(y, *p.field, depth);
  p.clamped = q.clamped;
  for (std::size_t i = 0; i < q.values.size(); ++i) {
    const DiscretePrior& prior = p.priors->at(i);
    const std::int64_t v = q.values[i];
    const std::int64_t c = std::clamp(v, prior.support_lo(), prior.support_hi());
    if (c != v) {
      q.values[i] = static_cast<std::int32_t>(c);
      ++p.clamped;
    }
  }
  p.yhat = std::move(q.values);

  const Shape shape = y.shape();
  p.latent.shape = shape;
  p.latent.depth = depth;
  p.latent.planes = slice(p.yhat, depth);
  std::vector<PrefixInterval> prefix(shape.size(), full_interval(depth));
  for (int l = 1; l <= depth; ++l) {
    TritPlane& plane = p.latent.planes[l - 1];
    PlaneAnalysis a = analyze_plane(prefix, *p.priors, l);
    RealTensor recon(shape, a.parent_mean);
    const PlaneContext ctx{*p.field, recon, prefix, a, depth};
    std::vector<Triple> coding =
        crr ? refine_plane(ctx, *crr, config.bounds) : a.probs;
    p.latent.order.push_back(
        rd_order(a, config.raw_priority ? std::span<const Triple>(a.probs) : coding, config.order));
    plane.active = a.active;
    double raw = 0.0, coded = 0.0;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      if (!a.active[i]) {
        require(plane.trits[i] == argmax(a.probs[i]), ErrorKind::kInvalidArgument,
                "quantized value outside the prior support");
        continue;
      }
      raw += entropy_bits(a.probs[i]);
      coded += cross_entropy(plane.trits[i], coding[i]);
    }
    p.raw_entropy_bits.push_back(raw);
    p.coded_entropy_bits.push_back(coded);
    if (collect_samples && a.active_count > 0)
      p.samples.push_back({p.field, std::move(recon), prefix, a, plane.trits, depth});
    p.coding.push_back(std::move(coding));
    apply_trits(prefix, plane);
  }
  return p;
}

ModelSet effective_models(const ModelSet& models, const CodecConfig& config, bool image_mode) {
  ModelSet m = models;
  if (!config.use_crr) m.crr = {};
  if (!config.use_cdr) m.cdr = {};
  if (!config.use_refit || !image_mode) m.synthesis.reset();
  m.round_to_float();
  return m;
}

Encoded encode(const Source& source, const CodecConfig& cfg, const ModelSet& models) {
  cfg.validate();
  const ModelSet eff = effective_models(models, cfg, source.image_mode());
  CodecConfig config = cfg;
  if (!eff.crr.empty()) config.bounds = eff.bounds;
  if (source.image_mode()) {
    require(source.block == config.block, ErrorKind::kInvalidArgument,
            "source block size differs from the config");
    require(!eff.synthesis || eff.synthesis->coefficients() == source.block * source.block,
            ErrorKind::kModelMismatch, "synthesis model does not match the block size");
  }

  const int depth = plan_depth(centered(source.latent, source.field.rounded_to_float()), config);
  const Plan p = make_plan(source.latent, source.field, depth, config,
                           eff.crr.empty() ? nullptr : &eff.crr);

  Encoded out;
  StreamHeader& h = out.container.header;
  h.mode.per_element = p.field->mode() == ParamMode::kPerElement;
  h.mode.raster_order = config.order == OrderMode::kRaster;
  h.mode.raw_priority = config.raw_priority;
  h.mode.image = source.image_mode();
  h.mode.crr = !eff.crr.empty();
  h.mode.block_log2 = source.image_mode() ? std::countr_zero(static_cast<unsigned>(source.block)) : 0;
  h.shape = source.latent.shape();
  h.depth = depth;
  h.chunk_size = config.chunk_size;
  for (double m : p.field->means()) h.means.push_back(static_cast<float>(m));
  for (double s : p.field->scales()) h.scales.push_back(static_cast<float>(s));
  h.model_checksum = eff.checksum();

  for (int l = 1; l <= depth; ++l) {
    const auto& order = p.latent.order[l - 1];
    std::vector<std::uint8_t> trits(order.size());
    std::vector<FrequencyTriple> freqs(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      trits[k] = p.latent.planes[l - 1].trits[order[k]];
      freqs[k] = quantize_probs(p.coding[l - 1][order[k]]);
    }
    const std::size_t before_chunks = out.container.symbols.chunks.size();
    const std::size_t before_bytes = out.container.symbols.payload.size();
    encode_symbols(trits, freqs, config.chunk_size, static_cast<std::uint8_t>(l),
                   out.container.symbols);
    out.planes.push_back({l, order.size(), out.container.symbols.chunks.size() - before_chunks,
                          out.container.symbols.payload.size() - before_bytes,
                          p.raw_entropy_bits[l - 1], p.coded_entropy_bits[l - 1]});
  }
  out.bytes = serialize(out.container);
  out.yhat = p.yhat;
  out.clamped = p.clamped;
  return out;
}

Budget Budget::parse(const std::string& text) {
  if (text == "full") return full();
  const bool level = !text.empty() && (text[0] == 'L' || text[0] == 'l');
  const std::string body = level ? text.substr(1) : text;
  if (level) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    require(ec == std::errc() && ptr == body.data() + body.size() && v >= 0.0 && std::isfinite(v),
            ErrorKind::kInvalidArgument, "bad level budget '" + text + "'");
    return of_level(v);
  }
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
  require(!body.empty() && ec == std::errc() && ptr == body.data() + body.size(),
          ErrorKind::kInvalidArgument,
          "budget must be 'full', a byte count or L<level>, got '" + text + "'");
  return of_bytes(v);
}

std::string Budget::to_string() const {
  switch (kind) {
    case Kind::kFull:
      return "full";
    case Kind::kBytes:
      return std::to_string(bytes);
    case Kind::kLevel: {
      std::ostringstream o;
      o << 'L' << level;
      return o.str();
    }
  }
  return {};
}

ProgressiveDecoder::ProgressiveDecoder(Container container, const ModelSet& models,
                                       DecodeToggles toggles)
    : container_(std::move(container)), toggles_(toggles) {
  const StreamHeader& h = container_.header;
  if (h.model_checksum == 0) {
    require(!h.mode.crr, ErrorKind::kFormat, "stream claims a rate model but no checksum");
  } else {
    ModelSet base = models;
    if (!h.mode.crr) base.crr = {};
    bool found = false;
    for (int variant = 0; variant < 4 && !found; ++variant) {
      ModelSet m = base;
      if (variant & 1) m.cdr = {};
      if (variant & 2) m.synthesis.reset();
      if (m.checksum() == h.model_checksum) {
        models_ = std::move(m);
        found = true;
      }
    }
    require(found, ErrorKind::kModelMismatch,
            "stream was encoded with different models (checksum mismatch)");
    require(!h.mode.crr || !models_.crr.empty(), ErrorKind::kModelMismatch,
            "stream needs rate models");
  }
  if (!toggles_.use_cdr) models_.cdr = {};
  if (!toggles_.use_refit) models_.synthesis.reset();
  if (h.mode.image) {
    const int b = 1 << h.mode.block_log2;
    require(h.shape.channels % (b * b) == 0, ErrorKind::kFormat,
            "image stream channels do not match its block size");
    require(!models_.synthesis || models_.synthesis->coefficients() == b * b,
            ErrorKind::kModelMismatch, "synthesis model does not match the block size");
  }

  field_ = std::make_shared<const GaussianField>(h.field());
  depth_ = h.depth;
  priors_ = std::make_unique<PriorSet>(*field_, depth_);
  order_mode_ = h.mode.raster_order ? OrderMode::kRaster : OrderMode::kRdPriority;
  use_crr_ = h.mode.crr;
  chunk_offsets_.push_back(0);
  for (const ChunkInfo& c : container_.symbols.chunks)
    chunk_offsets_.push_back(chunk_offsets_.back() + c.bytes);
  prefix_.assign(h.shape.size(), full_interval(depth_));
  start_plane();
}

void ProgressiveDecoder::start_plane() {
  while (plane_ <= depth_) {
    const PlaneAnalysis a = analyze_plane(prefix_, *priors_, plane_);
    const RealTensor recon(container_.header.shape, a.parent_mean);
    const PlaneContext ctx{*field_, recon, prefix_, a, depth_};
    coding_ = use_crr_ ? refine_plane(ctx, models_.crr, models_.bounds) : a.probs;
    order_ = rd_order(
        a, container_.header.mode.raw_priority ? std::span<const Triple>(a.probs) : coding_,
        order_mode_);
    for (std::size_t i = 0; i < prefix_.size(); ++i)
      if (!a.active[i]) prefix_[i] = prefix_[i].child(argmax(a.probs[i]));
    plane_done_ = 0;
    if (!order_.empty()) return;
    ++plane_;
  }
}

void ProgressiveDecoder::decode_next_chunk() {
  const ChunkInfo& info = container_.symbols.chunks[next_chunk_];
  require(!complete() && info.plane == plane_, ErrorKind::kFormat,
          "chunk " + std::to_string(next_chunk_) + " belongs to an unexpected plane");
  require(plane_done_ + info.trits <= order_.size(), ErrorKind::kFormat,
          "chunk runs past the end of its plane");
  const auto bytes = std::span<const std::uint8_t>(container_.symbols.payload)
                         .subspan(chunk_offsets_[next_chunk_], info.bytes);
  const auto trits = decode_chunk(
      bytes, info, [&](std::size_t k) { return quantize_probs(coding_[order_[k]]); },
      plane_done_);
  for (std::size_t k = 0; k < trits.size(); ++k) {
    PrefixInterval& p = prefix_[order_[plane_done_ + k]];
    p = p.child(trits[k]);
  }
  plane_done_ += trits.size();
  ++next_chunk_;
  if (plane_done_ == order_.size()) {
    ++plane_;
    start_plane();
  }
}

void ProgressiveDecoder::advance_to(std::size_t chunks) {
  chunks = std::min(chunks, available_chunks());
  while (next_chunk_ < chunks) decode_next_chunk();
}

double ProgressiveDecoder::level_after(std::size_t chunk) const {
  const ChunkInfo& info = container_.symbols.chunks[chunk];
  return (plane_ - 1) +
         static_cast<double>(plane_done_ + info.trits) / static_cast<double>(order_.size());
}

void ProgressiveDecoder::advance(const Budget& budget) {
  switch (budget.kind) {
    case Budget::Kind::kFull:
      advance_to(available_chunks());
      break;
    case Budget::Kind::kBytes:
      advance_to(chunks_within(container_, budget.bytes));
      break;
    case Budget::Kind::kLevel:
      while (next_chunk_ < available_chunks() && !complete() &&
             level_after(next_chunk_) <= budget.level)
        decode_next_chunk();
      break;
  }
}

DecodePosition ProgressiveDecoder::position() const {
  if (complete()) return {depth_, 0};
  return {plane_ - 1, plane_done_};
}

double ProgressiveDecoder::level() const {
  if (complete()) return depth_;
  return (plane_ - 1) + static_cast<double>(plane_done_) / static_cast<double>(order_.size());
}

std::size_t ProgressiveDecoder::consumed_bytes() const {
  return serialized_size(container_.header,
                         std::span(container_.symbols.chunks).first(next_chunk_),
                         chunk_offsets_[next_chunk_]);
}

RealTensor ProgressiveDecoder::conditional_means() const {
  return ctc::conditional_means(container_.header.shape, prefix_, *priors_);
}

RealTensor ProgressiveDecoder::refined_centered() const {
  const RealTensor cm = conditional_means();
  return refine_latent({*field_, cm, prefix_}, level(), depth_, models_.cdr);
}

RealTensor ProgressiveDecoder::latent() const { return uncentered(refined_centered(), *field_); }

RealTensor ProgressiveDecoder::image() const {
  require(container_.header.mode.image, ErrorKind::kInvalidArgument,
          "stream does not carry an image");
  const LinearTransform t(1 << container_.header.mode.block_log2);
  return models_.synthesis ? t.synthesize(latent(), *models_.synthesis) : t.synthesize(latent());
}

IntTensor ProgressiveDecoder::quantized() const {
  require(complete(), ErrorKind::kInvalidArgument, "stream is not fully decoded");
  IntTensor out(container_.header.shape);
  for (std::size_t i = 0; i < prefix_.size(); ++i) out[i] = prefix_[i].lo;
  return out;
}

Decoded decode_at(std::span<const std::uint8_t> stream, const Budget& budget,
                  const ModelSet& models, DecodeToggles toggles) {
  ProgressiveDecoder dec(parse(stream), models, toggles);
  dec.advance(budget);
  Decoded out;
  out.position = dec.position();
  out.level = dec.level();
  out.bytes = dec.consumed_bytes();
  out.chunks = dec.chunks_decoded();
  out.latent = dec.latent();
  if (dec.header().mode.image) out.image = dec.image();
  return out;
}

TrainingAsset training_asset(const Source& source) {
  return {source.latent, std::make_shared<const GaussianField>(source.field), source.image};
}

int corpus_depth(std::span<const TrainingAsset> assets, const CodecConfig& config) {
  require(!assets.empty(), ErrorKind::kInvalidArgument, "empty training corpus");
  if (config.fixed_depth > 0) return config.fixed_depth;
  std::map<int, int> votes;
  for (const TrainingAsset& a : assets)
    ++votes[plan_depth(centered(a.y, a.field->rounded_to_float()), config)];
  return std::max_element(votes.begin(), votes.end(),
                          [](const auto& x, const auto& y) { return x.second < y.second; })
      ->first;
}

std::array<std::vector<PlaneSample>, 3> crr_dataset(std::span<const TrainingAsset> assets,
                                                    const CodecConfig& config, int depth) {
  std::array<std::vector<PlaneSample>, 3> out;
  for (const TrainingAsset& a : assets) {
    Plan p = make_plan(a.y, *a.field, depth, config, nullptr, true);
    for (PlaneSample& s : p.samples)
      out[CrrRouter::slot_for(s.analysis.level, depth)].push_back(std::move(s));
  }
  return out;
}

std::vector<CdrAsset> cdr_dataset(std::span<const TrainingAsset> assets,
                                  const CodecConfig& config, int depth, const CrrRouter* crr) {
  std::vector<CdrAsset> out;
  for (const TrainingAsset& a : assets) {
    Plan p = make_plan(a.y, *a.field, depth, config, crr);
    out.push_back({p.field, centered(a.y, *p.field), std::move(p.latent), p.priors});
  }
  return out;
}

RealTensor refined_at_level(const ProgressiveLatent& latent, const PriorSet& priors,
                            const GaussianField& field, int level, const CdrRouter* cdr) {
  const DecodePosition pos = latent.canonical({level, 0});
  const auto prefix = latent.prefix_at(pos);
  const RealTensor cm = conditional_means(latent.shape, prefix, priors);
  RealTensor r = cdr ? refine_latent({field, cm, prefix}, latent.fractional_level(pos),
                                     latent.depth, *cdr)
                     : cm;
  return uncentered(std::move(r), field);
}

std::vector<RefitSample> refit_dataset(std::span<const TrainingAsset> assets,
                                       const CodecConfig& config, int depth,
                                       const ModelSet& models) {
  const ModelSet eff = effective_models(models, config, true);
  CodecConfig c = config;
  if (!eff.crr.empty()) c.bounds = eff.bounds;
  std::vector<RefitSample> out;
  for (const TrainingAsset& a : assets) {
    require(a.image.has_value(), ErrorKind::kInvalidArgument, "refit needs image assets");
    const Plan p = make_plan(a.y, *a.field, depth, c, eff.crr.empty() ? nullptr : &eff.crr);
    RefitSample s;
    s.image = *a.image;
    for (const auto& [level, weight] : default_refit_levels(depth))
      s.levels.push_back({weight, refined_at_level(p.latent, *p.priors, *p.field, level,
                                                   eff.cdr.empty() ? nullptr : &eff.cdr)});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ctc
