#include "ctc/synthetic.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

namespace ctc {
namespace {

// Unit-variance separable AR(1) noise for one channel.
std::vector<double> ar1_plane(int h, int w, double rho_h, double rho_w, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> u(static_cast<std::size_t>(h) * w);
  for (double& v : u) v = normal(rng);
  const double gw = std::sqrt(1.0 - rho_w * rho_w);
  for (int r = 0; r < h; ++r)
    for (int c = 1; c < w; ++c) {
      double& v = u[static_cast<std::size_t>(r) * w + c];
      v = rho_w * u[static_cast<std::size_t>(r) * w + c - 1] + gw * v;
    }
  const double gh = std::sqrt(1.0 - rho_h * rho_h);
  for (int r = 1; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double& v = u[static_cast<std::size_t>(r) * w + c];
      v = rho_h * u[static_cast<std::size_t>(r - 1) * w + c] + gh * v;
    }
  return u;
}

}  // namespace

std::vector<double> default_sigmas(int channels) {
  std::vector<double> s(std::max(channels, 0));
  for (int c = 0; c < channels; ++c)
    s[c] = channels == 1 ? 12.0 : 6.0 * std::pow(4.0, static_cast<double>(c) / (channels - 1));
  return s;
}

SyntheticSpec SyntheticSpec::with_shape(Shape shape, std::uint64_t seed) {
  SyntheticSpec s;
  s.shape = shape;
  s.sigma = default_sigmas(shape.channels);
  s.seed = seed;
  return s;
}

void SyntheticSpec::validate() const {
  require(shape.valid(), ErrorKind::kInvalidArgument, "synthetic shape must be non-empty");
  require(std::abs(rho_h) < 1.0 && std::abs(rho_w) < 1.0, ErrorKind::kInvalidArgument,
          "AR(1) correlation must satisfy |rho| < 1");
  require(sigma.size() == static_cast<std::size_t>(shape.channels), ErrorKind::kInvalidArgument,
          "need one sigma per channel");
  for (double s : sigma)
    require(s > 0.0 && std::isfinite(s), ErrorKind::kInvalidArgument, "sigma must be positive");
}

SyntheticLatent generate_latents(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  RealTensor y(spec.shape);
  const std::size_t plane = spec.shape.plane_size();
  for (int c = 0; c < spec.shape.channels; ++c) {
    const auto u = ar1_plane(spec.shape.height, spec.shape.width, spec.rho_h, spec.rho_w, rng);
    for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] = spec.sigma[c] * u[i];
  }
  return {std::move(y), GaussianField::per_channel(
                            spec.shape, std::vector<double>(spec.shape.channels, 0.0), spec.sigma)};
}

RealTensor generate_image(int colors, int height, int width, std::uint64_t seed) {
  require(colors >= 1 && height >= 1 && width >= 1, ErrorKind::kInvalidArgument,
          "image dimensions must be positive");
  std::mt19937_64 rng(seed);
  RealTensor img({colors, height, width});
  for (int c = 0; c < colors; ++c) {
    const auto u = ar1_plane(height, width, 0.95, 0.95, rng);
    for (std::size_t i = 0; i < u.size(); ++i) img[c * u.size() + i] = 128.0 + 40.0 * u[i];
  }
  std::uniform_int_distribution<int> ys(0, height - 1), xs(0, width - 1);
  std::uniform_real_distribution<double> level(-60.0, 60.0);
  const int rects = 4 + (height * width) / 1024;
  for (int k = 0; k < rects; ++k) {
    int y0 = ys(rng), y1 = ys(rng), x0 = xs(rng), x1 = xs(rng);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    const double offset = level(rng);
    for (int c = 0; c < colors; ++c)
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) img.at(c, y, x) += offset;
  }
  return to_8bit(img);
}

RealTensor to_8bit(const RealTensor& image) {
  RealTensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i)
    out[i] = std::clamp(std::round(image[i]), 0.0, 255.0);
  return out;
}

RealTensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  const auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {}
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    require(!t.empty(), ErrorKind::kFormat, path.string() + ": truncated PNM header");
    return t;
  };
  const std::string magic = token();
  require(magic == "P5" || magic == "P6", ErrorKind::kFormat,
          path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
  int dims[3];
  for (int& d : dims) {
    const std::string t = token();
    require(t.find_first_not_of("0123456789") == std::string::npos && t.size() < 7,
            ErrorKind::kFormat, path.string() + ": bad PNM header field");
    d = std::stoi(t);
  }
  const int width = dims[0], height = dims[1];
  require(width > 0 && height > 0 && dims[2] == 255, ErrorKind::kFormat,
          path.string() + ": need positive dimensions and maxval 255");
  const int colors = magic == "P5" ? 1 : 3;
  std::vector<unsigned char> raw(static_cast<std::size_t>(colors) * width * height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(in.gcount() == static_cast<std::streamsize>(raw.size()), ErrorKind::kFormat,
          path.string() + ": truncated pixel data");
  RealTensor img({colors, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < colors; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * width + x) * colors + c];
  return img;
}

void write_pnm(const std::filesystem::path& path, const RealTensor& image) {
  const Shape s = image.shape();
  require(s.channels == 1 || s.channels == 3, ErrorKind::kInvalidArgument,
          "PNM output needs one or three colors");
  const RealTensor px = to_8bit(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot create " + path.string());
  out << (s.channels == 1 ? "P5" : "P6") << '\n' << s.width << ' ' << s.height << "\n255\n";
  std::vector<unsigned char> raw(s.size());
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      for (int c = 0; c < s.channels; ++c)
        raw[(static_cast<std::size_t>(y) * s.width + x) * s.channels + c] =
            static_cast<unsigned char>(px.at(c, y, x));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
}

}  // namespace ctc
