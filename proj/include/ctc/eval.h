#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ctc/pipeline.h"

namespace ctc {

inline constexpr double kPsnrPeak = 255.0;

// 10 log10(255^2 / MSE); +inf for identical inputs.
double psnr(const RealTensor& a, const RealTensor& b);
double mse(const RealTensor& a, const RealTensor& b);

struct RdPoint {
  double rate = 0.0;     // bits per pixel
  double quality = 0.0;  // dB
};

struct RdCurve {
  std::vector<RdPoint> points;
  std::string tag;

  void validate() const;
};

// Bjontegaard delta rate of `test` against `reference` in percent: cubic
// fits of ln(rate) over quality, averaged over the shared quality range.
double bd_rate(const RdCurve& reference, const RdCurve& test);

struct SweepRow {
  std::string budget;
  std::size_t bytes = 0;
  double bpp = 0.0;
  double psnr = 0.0;
  double level = 0.0;
  double mse = 0.0;
};

// Pixels a rate is charged to: image pixels in image mode, H*W of the
// latent otherwise.
std::size_t pixel_count(const Source& source);

// Quality of a decode: image PSNR of the 8-bit output in image mode, latent
// PSNR at the same peak otherwise.
double decoded_quality(const Source& source, const Decoded& d, double* mse_out = nullptr);

// One encode, one forward decoding pass over the budgets in increasing order.
// Rows come back in the order the budgets were given.
std::vector<SweepRow> sweep(const Source& source, const CodecConfig& config,
                            const ModelSet& models, std::span<const Budget> budgets);
std::vector<SweepRow> sweep_stream(const Source& source, std::span<const std::uint8_t> stream,
                                   const ModelSet& models, std::span<const Budget> budgets,
                                   DecodeToggles toggles = {});

// n byte budgets spaced geometrically from the smallest chunk boundary to
// the full stream.
std::vector<Budget> log_spaced_budgets(std::span<const std::uint8_t> stream, int n);

std::string sweep_csv(std::span<const SweepRow> rows);

// Strictly increasing rates; repeated rates keep their best quality.
RdCurve rd_curve(std::span<const SweepRow> rows, std::string tag);

struct AblationMethod {
  std::string name;
  bool crr = false;
  bool cdr = false;
  bool refit = false;
};

// Baseline, I (CRR), II (CDR), III (CRR + CDR), IV (CDR + refit), CTC (all).
std::vector<AblationMethod> ablation_methods(bool image_mode);

struct AblationRow {
  std::string method;
  double bd_rate = 0.0;  // mean over assets against the baseline
  double bytes = 0.0;    // mean full-stream size
};

std::vector<AblationRow> ablation(std::span<const Source> assets, const CodecConfig& config,
                                  const ModelSet& models, std::span<const AblationMethod> methods,
                                  int budgets = 24);

std::string ablation_table(std::span<const AblationRow> rows);
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace ctc
