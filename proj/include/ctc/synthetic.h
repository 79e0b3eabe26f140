#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctc/latent_model.h"
#include "ctc/tensor.h"

namespace ctc {

// Geometric ladder of channel scales from 6 to 24.
std::vector<double> default_sigmas(int channels);

struct SyntheticSpec {
  Shape shape{4, 32, 32};
  double rho_h = 0.9;
  double rho_w = 0.9;
  std::vector<double> sigma = default_sigmas(4);  // one per channel
  std::uint64_t seed = 1;

  void validate() const;
  static SyntheticSpec with_shape(Shape shape, std::uint64_t seed);
};

struct SyntheticLatent {
  RealTensor y;
  GaussianField field;  // true per-channel sigma, zero mean
};

// Separable AR(1) field: unit-variance rows filtered along the width, then
// along the height, scaled per channel.
SyntheticLatent generate_latents(const SyntheticSpec& spec);

// 8-bit test picture: a smooth AR(1) background plus flat rectangles,
// integer valued in [0, 255].
RealTensor generate_image(int colors, int height, int width, std::uint64_t seed);

// Binary PGM (one color) or PPM (three colors), maxval 255.
RealTensor read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const RealTensor& image);

// Rounds and clips to [0, 255].
RealTensor to_8bit(const RealTensor& image);

}  // namespace ctc
