#include "ctc/selftest.h"

#include <functional>
#include <random>

#include "ctc/eval.h"

namespace ctc {
namespace {

Source small_asset(std::uint64_t seed) {
  const SyntheticLatent s = generate_latents(SyntheticSpec::with_shape({3, 16, 16}, seed));
  return latent_source(s.y, s.field);
}

bool entropy_theorem() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const Triple x{n(rng), n(rng), n(rng)};
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    const double betas[2] = {a, b};
    if (!entropy_monotonicity_check(x, betas)) return false;
  }
  return true;
}

bool coder_round_trip() {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = rng() % 3000 + 1;
    std::vector<std::uint8_t> trits(n);
    std::vector<FrequencyTriple> freqs(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      Triple p{u(rng), u(rng), u(rng)};
      const double s = p[0] + p[1] + p[2];
      for (double& v : p) v /= s;
      freqs[i] = quantize_probs(p);
      trits[i] = static_cast<std::uint8_t>(rng() % 3);
    }
    const EncodedSymbols e = encode_symbols(trits, freqs, 1 + rng() % 700);
    if (decode_symbols(e, [&](std::size_t i) { return freqs[i]; }) != trits) return false;
  }
  return true;
}

bool lossless_at_full() {
  const Source s = small_asset(21);
  const Encoded e = encode(s, CodecConfig{}, ModelSet{});
  ProgressiveDecoder d(parse(e.bytes), ModelSet{});
  d.advance(Budget::full());
  return d.quantized() == e.yhat;
}

bool truncation_equivalence() {
  const Source s = small_asset(22);
  CodecConfig c;
  c.chunk_size = 97;
  const Encoded e = encode(s, c, ModelSet{});
  const Container full = parse(e.bytes);
  for (std::size_t k = 0; k <= full.symbols.chunks.size(); ++k) {
    const std::size_t budget = serialized_size(truncate(full, k));
    const Decoded a = decode_at(e.bytes, Budget::of_bytes(budget), ModelSet{});
    const Decoded b = decode_at(serialize(truncate(full, k)), Budget::full(), ModelSet{});
    if (a.latent != b.latent || a.chunks != k) return false;
  }
  return true;
}

bool monotone_mse() {
  for (std::uint64_t seed = 31; seed < 34; ++seed) {
    const Source s = small_asset(seed);
    const Encoded e = encode(s, CodecConfig{}, ModelSet{});
    const auto rows = sweep_stream(s, e.bytes, ModelSet{}, log_spaced_budgets(e.bytes, 12));
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].mse > rows[i - 1].mse) return false;
  }
  return true;
}

bool header_corruption_detected() {
  const Encoded e = encode(small_asset(41), CodecConfig{}, ModelSet{});
  const std::size_t header = serialized_size(parse(e.bytes)) - parse(e.bytes).symbols.payload.size();
  for (std::size_t i = 0; i < header; ++i) {
    auto bytes = e.bytes;
    bytes[i] ^= 0x10;
    try {
      parse(bytes);
      return false;
    } catch (const Error&) {
    }
  }
  return true;
}

bool deterministic() {
  const Source s = small_asset(51);
  return encode(s, CodecConfig{}, ModelSet{}).bytes == encode(s, CodecConfig{}, ModelSet{}).bytes;
}

bool bd_identity() {
  RdCurve c;
  for (int i = 1; i <= 6; ++i) c.points.push_back({0.1 * i, 20.0 + 3.0 * std::log(i)});
  return bd_rate(c, c) == 0.0;
}

}  // namespace

std::vector<SelftestCase> run_selftest() {
  const std::vector<std::pair<std::string, std::function<bool()>>> cases = {
      {"entropy_monotone_in_beta", entropy_theorem},
      {"coder_round_trip", coder_round_trip},
      {"lossless_at_full_budget", lossless_at_full},
      {"truncation_equivalence", truncation_equivalence},
      {"monotone_mse", monotone_mse},
      {"header_corruption_detected", header_corruption_detected},
      {"deterministic_encode", deterministic},
      {"bd_rate_identity", bd_identity},
  };
  std::vector<SelftestCase> out;
  for (const auto& [name, fn] : cases) {
    SelftestCase c{name, false, {}};
    try {
      c.passed = fn();
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace ctc
