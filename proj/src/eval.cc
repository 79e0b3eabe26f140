#include "ctc/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

namespace ctc {
namespace {

Eigen::Vector4d cubic_fit(std::span<const RdPoint> pts) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(pts.size()), 4);
  Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double q = pts[i].quality;
    a.row(static_cast<Eigen::Index>(i)) << 1.0, q, q * q, q * q * q;
    b(static_cast<Eigen::Index>(i)) = std::log(pts[i].rate);
  }
  return a.colPivHouseholderQr().solve(b);
}

double integral(const Eigen::Vector4d& c, double lo, double hi) {
  const auto prim = [&](double x) {
    return c(0) * x + c(1) * x * x / 2 + c(2) * x * x * x / 3 + c(3) * x * x * x * x / 4;
  };
  return prim(hi) - prim(lo);
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double mse(const RealTensor& a, const RealTensor& b) {
  require(a.shape() == b.shape(), ErrorKind::kInvalidArgument, "compared tensors differ in shape");
  require(a.size() > 0, ErrorKind::kInvalidArgument, "compared tensors are empty");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double psnr(const RealTensor& a, const RealTensor& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / m);
}

void RdCurve::validate() const {
  require(points.size() >= 4, ErrorKind::kInvalidArgument,
          "BD-rate needs at least four points per curve");
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].rate > 0.0 && std::isfinite(points[i].quality), ErrorKind::kInvalidArgument,
            "BD-rate needs positive rates and finite qualities");
    require(i == 0 || points[i].rate > points[i - 1].rate, ErrorKind::kInvalidArgument,
            "curve rates must increase strictly");
  }
}

double bd_rate(const RdCurve& reference, const RdCurve& test) {
  reference.validate();
  test.validate();
  const auto range = [](const RdCurve& c) {
    const auto [lo, hi] = std::minmax_element(
        c.points.begin(), c.points.end(),
        [](const RdPoint& x, const RdPoint& y) { return x.quality < y.quality; });
    return std::pair{lo->quality, hi->quality};
  };
  const auto [rlo, rhi] = range(reference);
  const auto [tlo, thi] = range(test);
  const double lo = std::max(rlo, tlo), hi = std::min(rhi, thi);
  require(hi > lo, ErrorKind::kInvalidArgument, "curves share no quality range");
  const double avg =
      (integral(cubic_fit(test.points), lo, hi) - integral(cubic_fit(reference.points), lo, hi)) /
      (hi - lo);
  return (std::exp(avg) - 1.0) * 100.0;
}

std::size_t pixel_count(const Source& s) {
  return s.image ? s.image->shape().plane_size() : s.latent.shape().plane_size();
}

double decoded_quality(const Source& source, const Decoded& d, double* mse_out) {
  double m;
  if (source.image) {
    require(d.image.has_value(), ErrorKind::kInvalidArgument, "decode lacks an image");
    RealTensor clipped = *d.image;
    for (std::size_t i = 0; i < clipped.size(); ++i) clipped[i] = std::clamp(clipped[i], 0.0, 255.0);
    m = mse(clipped, *source.image);
  } else {
    m = mse(d.latent, source.latent);
  }
  if (mse_out) *mse_out = m;
  return m == 0.0 ? std::numeric_limits<double>::infinity()
                  : 10.0 * std::log10(kPsnrPeak * kPsnrPeak / m);
}

std::vector<SweepRow> sweep_stream(const Source& source, std::span<const std::uint8_t> stream,
                                   const ModelSet& models, std::span<const Budget> budgets,
                                   DecodeToggles toggles) {
  const Container container = parse(stream);
  std::vector<std::size_t> idx(budgets.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto key = [&](const Budget& b) {
    switch (b.kind) {
      case Budget::Kind::kFull:
        return std::pair{0, static_cast<double>(container.symbols.chunks.size())};
      case Budget::Kind::kBytes:
        return std::pair{0, static_cast<double>(chunks_within(container, b.bytes))};
      case Budget::Kind::kLevel:
        return std::pair{1, b.level};
    }
    return std::pair{0, 0.0};
  };
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return key(budgets[a]) < key(budgets[b]); });

  const double pixels = static_cast<double>(pixel_count(source));
  std::vector<SweepRow> rows(budgets.size());
  auto dec = std::make_unique<ProgressiveDecoder>(container, models, toggles);
  for (std::size_t i : idx) {
    const Budget& b = budgets[i];
    const bool behind =
        (b.kind == Budget::Kind::kBytes && dec->chunks_decoded() > chunks_within(container, b.bytes)) ||
        (b.kind == Budget::Kind::kLevel && dec->level() > b.level);
    if (behind) dec = std::make_unique<ProgressiveDecoder>(container, models, toggles);
    dec->advance(b);
    Decoded d;
    d.position = dec->position();
    d.level = dec->level();
    d.bytes = dec->consumed_bytes();
    d.chunks = dec->chunks_decoded();
    d.latent = dec->latent();
    if (dec->header().mode.image) d.image = dec->image();
    SweepRow& r = rows[i];
    r.budget = b.to_string();
    r.bytes = d.bytes;
    r.bpp = 8.0 * static_cast<double>(d.bytes) / pixels;
    r.psnr = decoded_quality(source, d, &r.mse);
    r.level = d.level;
  }
  return rows;
}

std::vector<SweepRow> sweep(const Source& source, const CodecConfig& config,
                            const ModelSet& models, std::span<const Budget> budgets) {
  const Encoded e = encode(source, config, models);
  return sweep_stream(source, e.bytes, effective_models(models, config, source.image_mode()),
                      budgets);
}

std::vector<Budget> log_spaced_budgets(std::span<const std::uint8_t> stream, int n) {
  require(n >= 1, ErrorKind::kInvalidArgument, "need at least one budget");
  const Container c = parse(stream);
  const double lo = static_cast<double>(serialized_size(c.header, {}, 0));
  const double hi = static_cast<double>(stream.size());
  std::vector<Budget> out;
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 1.0 : static_cast<double>(i) / (n - 1);
    out.push_back(Budget::of_bytes(static_cast<std::size_t>(std::llround(lo * std::pow(hi / lo, t)))));
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "budget,bytes,bpp,psnr,level\n";
  for (const SweepRow& r : rows)
    out += r.budget + ',' + std::to_string(r.bytes) + ',' + fixed(r.bpp, 6) + ',' +
           fixed(r.psnr, 6) + ',' + fixed(r.level, 6) + '\n';
  return out;
}

RdCurve rd_curve(std::span<const SweepRow> rows, std::string tag) {
  std::vector<SweepRow> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.bytes < b.bytes; });
  RdCurve c;
  c.tag = std::move(tag);
  for (const SweepRow& r : sorted) {
    if (!std::isfinite(r.psnr) || r.bpp <= 0.0) continue;
    if (!c.points.empty() && c.points.back().rate == r.bpp) {
      c.points.back().quality = std::max(c.points.back().quality, r.psnr);
      continue;
    }
    c.points.push_back({r.bpp, r.psnr});
  }
  return c;
}

std::vector<AblationMethod> ablation_methods(bool image_mode) {
  std::vector<AblationMethod> m = {
      {"baseline", false, false, false},
      {"I", true, false, false},
      {"II", false, true, false},
      {"III", true, true, false},
  };
  if (image_mode) m.push_back({"IV", false, true, true});
  m.push_back({"CTC", true, true, image_mode});
  return m;
}

std::vector<AblationRow> ablation(std::span<const Source> assets, const CodecConfig& config,
                                  const ModelSet& models, std::span<const AblationMethod> methods,
                                  int budgets) {
  require(!assets.empty() && !methods.empty(), ErrorKind::kInvalidArgument,
          "ablation needs assets and methods");
  std::vector<AblationRow> rows(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) rows[m].method = methods[m].name;
  for (const Source& s : assets) {
    std::vector<RdCurve> curves;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      CodecConfig c = config;
      c.use_crr = methods[m].crr;
      c.use_cdr = methods[m].cdr;
      c.use_refit = methods[m].refit;
      const Encoded e = encode(s, c, models);
      const auto b = log_spaced_budgets(e.bytes, budgets);
      const auto r = sweep_stream(s, e.bytes, effective_models(models, c, s.image_mode()), b);
      curves.push_back(rd_curve(r, methods[m].name));
      rows[m].bytes += static_cast<double>(e.bytes.size()) / static_cast<double>(assets.size());
    }
    for (std::size_t m = 0; m < methods.size(); ++m)
      rows[m].bd_rate +=
          (m == 0 ? 0.0 : bd_rate(curves[0], curves[m])) / static_cast<double>(assets.size());
  }
  return rows;
}

std::string ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream o;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %12s %12s\n", "method", "bd_rate_%", "mean_bytes");
  o << buf;
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %12.3f %12.1f\n", r.method.c_str(), r.bd_rate, r.bytes);
    o << buf;
  }
  return o.str();
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "method,bd_rate,mean_bytes\n";
  for (const AblationRow& r : rows)
    out += r.method + ',' + fixed(r.bd_rate, 6) + ',' + fixed(r.bytes, 3) + '\n';
  return out;
}

}  // namespace ctc
