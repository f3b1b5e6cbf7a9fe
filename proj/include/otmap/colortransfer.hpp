#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otmap/solver.hpp"
#include "otmap/tensor.hpp"

namespace otmap::color {

struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major RGB triples

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool operator==(const ImageRGB& o) const = default;
};

// Binary PPM (P6, maxval 255) with lossless round-trip.
ImageRGB load_ppm(const std::string& path);
void save_ppm(const ImageRGB& img, const std::string& path);

// Per-pixel v -> 2v/255 - 1, one row per pixel.
Tensor image_to_cloud(const ImageRGB& img);

// Inverse of image_to_cloud with clamping to [-1,1] and round-to-nearest
// 8-bit quantization; exact on the byte lattice.
ImageRGB cloud_to_image(const Tensor& cloud, int width, int height);

// Samples pixel colors uniformly with replacement (frequency weighting).
class CloudSampler final : public solver::Sampler {
 public:
  explicit CloudSampler(Tensor cloud);
  int dim() const override { return static_cast<int>(cloud_.cols()); }
  Tensor sample(int n, Rng& rng) const override;
  const Tensor& cloud() const { return cloud_; }

 private:
  Tensor cloud_;
};

enum class ZPolicy { fixed_z, per_pixel };

// Maps every pixel through the trained forward generator. fixed_z shares one
// noise vector across the image (distinct colors are mapped once and reused,
// so equal input pixels always produce equal output pixels); per_pixel draws
// fresh noise per pixel.
ImageRGB transfer(const solver::TrainState& state, const ImageRGB& src, ZPolicy policy,
                  std::uint64_t seed);

// Energy distance between 2000-color subsamples of the two images. Each
// subsample seed is derived from that image's bytes, so the score is
// symmetric and identical images score exactly zero.
double histogram_match_score(const ImageRGB& out_img, const ImageRGB& target_img);

}  // namespace otmap::color
