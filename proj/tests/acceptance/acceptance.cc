// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check runs on seeded data.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "ctc/eval.h"
#include "ctc/parallel.h"
#include "support/test_support.h"

namespace ctc {
namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

// Entropy in bits of softmax(beta x), computed with a shifted log-sum-exp.
double entropy_oracle(const Triple& x, double beta) {
  const double m = std::max({x[0], x[1], x[2]});
  double z = 0.0;
  for (double v : x) z += std::exp(beta * (v - m));
  double h = 0.0;
  for (double v : x) {
    const double logp = beta * (v - m) - std::log(z);
    h -= std::exp(logp) * logp;
  }
  return h / std::numbers::ln2;
}

Outcome entropy_monotonicity() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(1e-3, 10.0);
  std::size_t violations = 0, strict_cases = 0, not_strict = 0;
  double oracle_gap = 0.0;
  for (int i = 0; i < 100000; ++i) {
    Triple x{n(rng), n(rng), n(rng)};
    if (i % 10 == 0) x[1] = x[0];
    if (i % 50 == 0) x = {x[0], x[0], x[0]};
    double b1 = u(rng), b2 = u(rng);
    if (b1 == b2) continue;
    if (b1 > b2) std::swap(b1, b2);
    const double h1 = entropy_bits(softmax(x, b1));
    const double h2 = entropy_bits(softmax(x, b2));
    oracle_gap = std::max({oracle_gap, std::abs(h1 - entropy_oracle(x, b1)),
                           std::abs(h2 - entropy_oracle(x, b2))});
    if (h2 > h1 + 1e-12) ++violations;
    const double betas[] = {b1, b2};
    if (!entropy_monotonicity_check(x, betas)) ++violations;
    const bool distinct = x[0] != x[1] && x[1] != x[2] && x[0] != x[2];
    // Strictness is only resolvable when the entropy change exceeds the
    // tolerance in exact arithmetic.
    if (distinct && entropy_oracle(x, b1) - entropy_oracle(x, b2) > 1e-12) {
      ++strict_cases;
      if (!(h2 < h1)) ++not_strict;
    }
  }
  return {violations == 0 && not_strict == 0 && oracle_gap < 1e-12,
          format("violations=%zu strict_cases=%zu not_strict=%zu max_oracle_gap=%.2e", violations,
                 strict_cases, not_strict, oracle_gap)};
}

// Unnormalized mass of bin k of a zero-mean Gaussian, from complementary
// error functions so far tails keep relative precision.
double bin_mass_oracle(std::int64_t k, double sigma) {
  const double a = (std::abs(static_cast<double>(k)) - 0.5) / (sigma * std::numbers::sqrt2);
  const double b = (std::abs(static_cast<double>(k)) + 0.5) / (sigma * std::numbers::sqrt2);
  if (k == 0) return std::erf(b);
  return 0.5 * (std::erfc(a) - std::erfc(b));
}

Outcome conditional_mean_optimality() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> log_sigma(std::log(0.1), std::log(2000.0));
  std::size_t cases = 0, skipped = 0, violations = 0;
  double worst = 0.0;
  while (cases < 1000) {
    const int depth = 1 + static_cast<int>(rng() % 7);
    const double sigma = std::exp(log_sigma(rng));
    const DiscretePrior prior(sigma, depth);
    const int plane = 1 + static_cast<int>(rng() % depth);
    const std::int64_t width = pow3(depth - plane + 1);
    const std::int64_t half = (pow3(depth) - 1) / 2;
    const std::int64_t j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(pow3(plane - 1)));
    const std::int64_t lo = -half + j * width, hi = lo + width - 1;

    double mass = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) mass += bin_mass_oracle(k, sigma);
    const IntervalStats st = prior.stats(lo, hi);
    if (mass < 1e-250 || st.degenerate) {
      ++skipped;
      continue;
    }
    ++cases;
    const auto expected_error = [&](double r) {
      double e = 0.0;
      for (std::int64_t k = lo; k <= hi; ++k) e += bin_mass_oracle(k, sigma) * (k - r) * (k - r);
      return e / mass;
    };
    const double at_mean = expected_error(st.mean);
    std::vector<double> candidates{0.5 * (lo + hi)};
    for (int g = 0; g <= 100; ++g) candidates.push_back(lo + (hi - lo) * g / 100.0);
    for (double r : candidates) {
      const double excess = at_mean - expected_error(r);
      worst = std::max(worst, excess);
      if (excess > 1e-10) ++violations;
    }
  }
  return {violations == 0, format("cases=%zu skipped_zero_mass=%zu violations=%zu worst_excess=%.2e",
                                  cases, skipped, violations, worst)};
}

Triple random_triple(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.6, 1.0);
  Triple t{g(rng) + 1e-12, g(rng) + 1e-12, g(rng) + 1e-12};
  const double s = t[0] + t[1] + t[2];
  for (double& v : t) v /= s;
  return t;
}

std::uint8_t draw(const Triple& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return u < p[0] ? 0 : u < p[0] + p[1] ? 1 : 2;
}

Outcome coder_tightness() {
  std::mt19937_64 rng(303);
  // Rate on one chunk against the cross-entropy of the true triples.
  constexpr std::size_t kTrits = 100000;
  std::vector<std::uint8_t> trits(kTrits);
  std::vector<FrequencyTriple> freqs(kTrits);
  double cross_entropy_bits = 0.0;
  for (std::size_t i = 0; i < kTrits; ++i) {
    const Triple p = random_triple(rng);
    trits[i] = draw(p, rng);
    freqs[i] = quantize_probs(p);
    cross_entropy_bits -= std::log2(p[trits[i]]);
  }
  const EncodedSymbols one = encode_symbols(trits, freqs, kTrits);
  const double payload_bits = 8.0 * static_cast<double>(one.payload.size());
  const bool tight = std::abs(payload_bits - cross_entropy_bits) <= 0.01 * cross_entropy_bits + 8 * 64;
  const auto freq_of = [&](const std::vector<FrequencyTriple>& f) {
    return [&f](std::size_t i) { return f[i]; };
  };
  bool lossless = decode_symbols(one, freq_of(freqs)) == trits;

  // Randomized round trips.
  std::size_t failures = 0;
  for (int s = 0; s < 1000; ++s) {
    const std::size_t n = rng() % 3000;
    std::vector<std::uint8_t> t(n);
    std::vector<FrequencyTriple> f(n);
    for (std::size_t i = 0; i < n; ++i) {
      Triple p = random_triple(rng);
      if (rng() % 8 == 0) p = {1e-9, 1.0 - 2e-9, 1e-9};
      t[i] = draw(p, rng);
      f[i] = quantize_probs(p);
    }
    const auto enc = encode_symbols(t, f, 1 + static_cast<std::uint32_t>(rng() % 700));
    if (decode_symbols(enc, freq_of(f)) != t) ++failures;
  }
  lossless = lossless && failures == 0;

  // Every chunk boundary of a codec stream decodes its prefix exactly.
  std::size_t boundary_failures = 0, boundaries = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Source src = testing::ar1_source(310 + seed, {3, 16, 16});
    CodecConfig c;
    c.chunk_size = 97;
    const Encoded e = encode(src, c, {});
    const Plan plan = make_plan(src.latent, src.field, e.container.header.depth, c, nullptr);
    for (std::size_t k = 0; k <= e.container.symbols.chunks.size(); ++k, ++boundaries) {
      ProgressiveDecoder d(parse(serialize(truncate(e.container, k))), {});
      d.advance(Budget::full());
      const auto want = plan.latent.prefix_at(d.position());
      if (d.chunks_decoded() != k || !std::equal(want.begin(), want.end(), d.prefix().begin()))
        ++boundary_failures;
    }
  }
  return {tight && lossless && boundary_failures == 0,
          format("payload_bits=%.0f cross_entropy=%.0f excess=%.3f%% roundtrip_failures=%zu "
                 "boundaries=%zu boundary_failures=%zu",
                 payload_bits, cross_entropy_bits,
                 100.0 * (payload_bits / cross_entropy_bits - 1.0), failures, boundaries,
                 boundary_failures)};
}

Outcome incompressible_baseline() {
  const Shape s{4, 64, 64};
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> u(-121, 121);
  RealTensor y(s);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = u(rng);
  const GaussianField flat = GaussianField::per_channel(s, {0, 0, 0, 0}, {1e7, 1e7, 1e7, 1e7});
  // One chunk per plane: the five flush words stay in the payload, the chunk
  // table is container overhead. The default chunking is reported alongside.
  CodecConfig c;
  c.fixed_depth = 5;
  c.chunk_size = static_cast<std::uint32_t>(s.size());
  const Encoded e = encode(latent_source(y, flat), c, {});
  std::size_t trits = 0;
  for (const auto& r : e.planes) trits += r.active;
  const double payload = 8.0 * static_cast<double>(e.container.symbols.payload.size()) / trits;
  const double overhead = 8.0 * static_cast<double>(e.bytes.size() - e.container.symbols.payload.size()) / trits;
  const double rel = payload / std::log2(3.0) - 1.0;
  CodecConfig chunked = c;
  chunked.chunk_size = CodecConfig{}.chunk_size;
  const Encoded d = encode(latent_source(y, flat), chunked, {});
  const double flush = 32.0 * static_cast<double>(d.container.symbols.chunks.size()) / trits;
  const double coded = 8.0 * static_cast<double>(d.container.symbols.payload.size()) / trits - flush;
  return {trits == 5 * s.size() && std::abs(rel) <= 0.01,
          format("bits_per_trit=%.5f log2(3)=%.5f rel=%+.3f%% container_overhead=%.5f bits/trit; "
                 "%u-trit chunks: coded=%.5f flush=%.5f bits/trit",
                 payload, std::log2(3.0), 100.0 * rel, overhead, chunked.chunk_size, coded, flush)};
}

Outcome progressive_monotonicity() {
  std::size_t latent_violations = 0, image_violations = 0, checks = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Source src = testing::ar1_source(500 + seed);
    const Encoded e = encode(src, CodecConfig{}, {});
    const auto rows = sweep_stream(src, e.bytes, {}, log_spaced_budgets(e.bytes, 30));
    for (std::size_t i = 1; i < rows.size(); ++i, ++checks)
      if (rows[i].mse > rows[i - 1].mse) ++latent_violations;

    CodecConfig ic;
    ic.source = SourceMode::kImageLinear;
    const Source img = image_source(generate_image(1, 64, 64, 520 + seed), 8);
    const Encoded ie = encode(img, ic, {});
    const auto irows = sweep_stream(img, ie.bytes, {}, log_spaced_budgets(ie.bytes, 30));
    for (std::size_t i = 1; i < irows.size(); ++i, ++checks)
      if (irows[i].psnr < irows[i - 1].psnr) ++image_violations;
  }
  return {latent_violations == 0 && image_violations == 0,
          format("assets=10+10 budgets=30 comparisons=%zu latent_violations=%zu image_violations=%zu",
                 checks, latent_violations, image_violations)};
}

// Shared by the rate, distortion and determinism criteria.
struct TrainedLatentModels {
  CodecConfig config;
  int depth = 0;
  ModelSet models;
  std::array<CrrTrainResult, 3> crr;
};

TrainedLatentModels train_latent_models() {
  TrainedLatentModels t;
  t.config.fixed_depth = 5;
  std::vector<TrainingAsset> train;
  for (int s = 0; s < 24; ++s) train.push_back(training_asset(testing::ar1_source(1000 + s)));
  t.depth = corpus_depth(train, t.config);
  const auto data = crr_dataset(train, t.config, t.depth);
  t.models.bounds = t.config.bounds;
  for (int slot = 0; slot < 3; ++slot) {
    TrainOptions o = t.config.crr_train;
    o.seed += slot;
    t.crr[slot] = train_crr(data[slot], t.config.bounds, o);
    t.models.crr.slots[slot] = t.crr[slot].model;
  }
  const auto cdr_data = cdr_dataset(train, t.config, t.depth, &t.models.crr);
  for (int slot = 0; slot < 3; ++slot) {
    CdrTrainOptions o = t.config.cdr_train;
    o.seed += slot;
    t.models.cdr.slots[slot] = train_cdr(cdr_data, slot, o).model;
  }
  return t;
}

const TrainedLatentModels& trained() {
  static const TrainedLatentModels t = train_latent_models();
  return t;
}

Outcome crr_effectiveness() {
  const TrainedLatentModels& t = trained();
  double ce = 0.0, h = 0.0;
  std::size_t n = 0;
  double raw_bytes = 0.0, crr_bytes = 0.0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Source src = testing::ar1_source(2000 + seed);
    const Plan plan = make_plan(src.latent, src.field, t.depth, t.config, nullptr, true);
    for (const PlaneSample& s : plan.samples) {
      if (s.analysis.level > t.depth - 2) continue;
      const auto q = refine_plane(s.context(), t.models.crr, t.models.bounds);
      for (std::size_t i = 0; i < q.size(); ++i) {
        if (!s.analysis.active[i]) continue;
        ce += cross_entropy(s.trits[i], q[i]);
        h += entropy_bits(s.analysis.probs[i]);
        ++n;
      }
    }
    CodecConfig raw = t.config;
    raw.use_crr = false;
    raw_bytes += static_cast<double>(encode(src, raw, {}).bytes.size());
    crr_bytes += static_cast<double>(encode(src, t.config, t.models).bytes.size());
  }
  ce /= static_cast<double>(n);
  h /= static_cast<double>(n);
  const double saving = 1.0 - crr_bytes / raw_bytes;
  return {ce < h && saving >= 0.02,
          format("held_out_trits=%zu ce=%.4f H(P)=%.4f paired_saving=%.2f%% (raw %.0f B, crr %.0f B)",
                 n, ce, h, 100.0 * saving, raw_bytes, crr_bytes)};
}

Outcome cdr_effectiveness() {
  const TrainedLatentModels& t = trained();
  std::vector<TrainingAsset> held;
  for (int s = 0; s < 6; ++s) held.push_back(training_asset(testing::ar1_source(3000 + s)));
  const auto data = cdr_dataset(held, t.config, t.depth, &t.models.crr);
  bool ok = true;
  std::string detail;
  for (int slot = 0; slot < 3; ++slot) {
    const double base = cdr_mean_loss(data, slot, nullptr);
    const double refined = cdr_mean_loss(data, slot, &*t.models.cdr.slots[slot]);
    const double gain = 1.0 - refined / base;
    ok = ok && gain >= 0.05;
    detail += format("slot%d %.2f->%.2f (%.1f%%) ", slot, base, refined, 100.0 * gain);
  }
  return {ok, detail};
}

Outcome decoder_refit() {
  CodecConfig c;
  c.source = SourceMode::kImageLinear;
  std::vector<Source> sources;
  std::vector<TrainingAsset> assets;
  for (int s = 0; s < 12; ++s) {
    sources.push_back(image_source(generate_image(1, 64, 64, 200 + s), 8));
    assets.push_back(training_asset(sources.back()));
  }
  const int depth = corpus_depth(assets, c);
  c.fixed_depth = depth;
  const LinearTransform transform(c.block);
  const auto data = refit_dataset(assets, c, depth, {});
  SynthesisWeights w = retrain_decoder(transform, data, c.refit_objective, transform.default_synthesis());
  w.round_to_float();
  ModelSet refit;
  refit.synthesis = w;

  std::vector<double> before(5, 0.0), after(5, 0.0);
  for (const Source& src : sources) {
    const Encoded e = encode(src, c, refit);
    for (int k = 0; k < 5; ++k) {
      const Budget b = Budget::of_level(depth - k);
      before[k] += decoded_quality(src, decode_at(e.bytes, b, refit, {true, false}));
      after[k] += decoded_quality(src, decode_at(e.bytes, b, refit, {true, true}));
    }
  }
  bool ok = before[0] - after[0] < 0.1 * sources.size();
  std::string detail = format("depth=%d ", depth);
  for (int k = 0; k < 5; ++k) {
    before[k] /= sources.size();
    after[k] /= sources.size();
    if (k >= 2) ok = ok && after[k] > before[k];
    detail += format("L-%d %.3f->%.3f ", k, before[k], after[k]);
  }
  return {ok, detail};
}

Outcome priority_ablation() {
  std::size_t wins = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Source src = testing::ar1_source(600 + seed);
    CodecConfig rd, raster;
    rd.chunk_size = raster.chunk_size = 256;
    raster.order = OrderMode::kRaster;
    const Encoded a = encode(src, rd, {}), b = encode(src, raster, {});
    const auto budgets = log_spaced_budgets(a.bytes, 32);
    const auto ra = sweep_stream(src, a.bytes, {}, budgets);
    const auto rb = sweep_stream(src, b.bytes, {}, budgets);
    for (std::size_t i = 1; i + 1 < budgets.size(); ++i) {
      if (rb[i].bytes == serialized_size(b.container) && ra[i].bytes == a.bytes.size()) continue;
      ++total;
      if (ra[i].mse <= rb[i].mse) ++wins;
    }
  }
  const double frac = static_cast<double>(wins) / total;
  return {frac >= 0.9, format("intermediate_budgets=%zu rd_wins=%zu fraction=%.3f", total, wins, frac)};
}

Outcome gradient_checks() {
  std::size_t params = 0, failures = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& r : {testing::check_crr_gradient(seed), testing::check_cdr_gradient(seed)}) {
      params += r.parameters;
      failures += r.failures;
      worst = std::max(worst, r.worst);
    }
  }
  return {failures == 0 && params > 0,
          format("configs=10+10 parameters=%zu failures=%zu worst_rel=%.2e", params, failures, worst)};
}

Outcome bd_rate_tool() {
  const RdCurve ref = testing::smooth_curve(0.05, 0.0, 6, 25, 40);
  RdCurve shifted = ref;
  for (auto& p : shifted.points) p.rate *= 0.9;
  const double same = bd_rate(ref, ref);
  const double shift = bd_rate(ref, shifted);
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> scale(0.02, 0.2), off(0.0, 0.3), q0(20, 26), q1(36, 44);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const RdCurve a = testing::smooth_curve(scale(rng), off(rng), 4 + trial % 5, q0(rng), q1(rng));
    const RdCurve b = testing::smooth_curve(scale(rng), off(rng), 4 + trial % 4, q0(rng), q1(rng));
    const double want = testing::bd_rate_oracle(a, b);
    worst = std::max(worst, std::abs(bd_rate(a, b) - want) / std::max(std::abs(want), 1e-9));
  }
  return {std::abs(same) < 1e-9 && std::abs(shift + 10.0) <= 1e-6 && worst <= 5e-4,
          format("identical=%.2e shift=%.9f oracle_worst_rel=%.2e", same, shift, worst)};
}

Outcome determinism() {
  const TrainedLatentModels& t = trained();
  const Source latent = testing::ar1_source(700);
  const Source image = image_source(generate_image(3, 32, 32, 701), 8);
  CodecConfig ic;
  ic.source = SourceMode::kImageLinear;

  struct Snapshot {
    std::vector<std::uint8_t> latent_stream, image_stream;
    RealTensor latent_mid, image_mid;
    std::string latent_csv, image_csv;
    std::vector<std::uint8_t> model_bytes;
  };
  const auto snapshot = [&]() {
    Snapshot s;
    const Encoded le = encode(latent, t.config, t.models);
    const Encoded ie = encode(image, ic, {});
    s.latent_stream = le.bytes;
    s.image_stream = ie.bytes;
    s.latent_mid = decode_at(le.bytes, Budget::of_bytes(le.bytes.size() / 2), t.models).latent;
    s.image_mid = *decode_at(ie.bytes, Budget::of_bytes(ie.bytes.size() / 3), {}).image;
    s.latent_csv = sweep_csv(sweep_stream(latent, le.bytes, t.models, log_spaced_budgets(le.bytes, 20)));
    s.image_csv = sweep_csv(sweep_stream(image, ie.bytes, {}, log_spaced_budgets(ie.bytes, 20)));
    const auto data = crr_dataset(std::vector{training_asset(latent)}, t.config, t.depth);
    TrainOptions o;
    o.epochs = 2;
    o.hidden = 6;
    s.model_bytes = serialize_crr(train_crr(data[2], t.config.bounds, o).model, 2, t.config.bounds);
    return s;
  };
  const int saved = worker_count();
  std::vector<Snapshot> runs;
  for (int workers : {1, 4, 1, 3}) {
    set_worker_count(workers);
    runs.push_back(snapshot());
  }
  set_worker_count(saved);
  std::size_t mismatches = 0;
  for (const Snapshot& s : runs) {
    const Snapshot& r = runs.front();
    mismatches += s.latent_stream != r.latent_stream;
    mismatches += s.image_stream != r.image_stream;
    mismatches += !(s.latent_mid == r.latent_mid);
    mismatches += !(s.image_mid == r.image_mid);
    mismatches += s.latent_csv != r.latent_csv;
    mismatches += s.image_csv != r.image_csv;
    mismatches += s.model_bytes != r.model_bytes;
  }
  return {mismatches == 0, format("runs=4 worker_counts=1,4,1,3 artifacts=7 mismatches=%zu", mismatches)};
}

}  // namespace
}  // namespace ctc

int main() {
  using ctc::Outcome;
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"entropy decreases in temperature", ctc::entropy_monotonicity},
      {"conditional mean is the optimal reconstruction", ctc::conditional_mean_optimality},
      {"coder tightness and truncation", ctc::coder_tightness},
      {"incompressible baseline", ctc::incompressible_baseline},
      {"progressive monotonicity", ctc::progressive_monotonicity},
      {"rate refinement effectiveness", ctc::crr_effectiveness},
      {"distortion refinement effectiveness", ctc::cdr_effectiveness},
      {"decoder refit", ctc::decoder_refit},
      {"priority ordering beats raster", ctc::priority_ablation},
      {"gradient checks", ctc::gradient_checks},
      {"BD-rate tool", ctc::bd_rate_tool},
      {"determinism", ctc::determinism},
  };
  int failed = 0, index = 0;
  for (const auto& [name, fn] : criteria) {
    ++index;
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", r.passed ? "PASS" : "FAIL", index, name, r.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !r.passed;
  }
  std::printf("%d of %d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
