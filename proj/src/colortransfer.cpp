#include "otmap/colortransfer.hpp"

#include "otmap/oracle.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace otmap::color {

namespace {

// header tokens separated by whitespace/comments, then a single whitespace
// byte before the binary payload
struct PpmHeader {
  int width = 0, height = 0, maxval = 0;
  std::size_t payload_offset = 0;
};

PpmHeader parse_ppm_header(const std::string& buf, const std::string& path) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (start == pos) throw std::runtime_error("ppm: truncated header in " + path);
    return buf.substr(start, pos - start);
  };

  if (next_token() != "P6") throw std::runtime_error("ppm: not a P6 file: " + path);
  PpmHeader h;
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw std::runtime_error("ppm: malformed header in " + path);
  }
  if (h.width < 1 || h.height < 1)
    throw std::runtime_error("ppm: bad dimensions in " + path);
  if (h.maxval != 255) throw std::runtime_error("ppm: only maxval 255 supported: " + path);
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw std::runtime_error("ppm: malformed header in " + path);
  h.payload_offset = pos + 1;
  return h;
}

}  // namespace

ImageRGB load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ppm: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const PpmHeader h = parse_ppm_header(buf, path);
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (buf.size() - h.payload_offset < need)
    throw std::runtime_error("ppm: truncated payload in " + path);
  ImageRGB img;
  img.width = h.width;
  img.height = h.height;
  img.rgb.assign(buf.begin() + static_cast<std::ptrdiff_t>(h.payload_offset),
                 buf.begin() + static_cast<std::ptrdiff_t>(h.payload_offset + need));
  return img;
}

void save_ppm(const ImageRGB& img, const std::string& path) {
  if (img.rgb.size() != img.pixel_count() * 3)
    throw std::invalid_argument("ppm: buffer length does not match dimensions");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("ppm: cannot write " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  if (!f) throw std::runtime_error("ppm: short write to " + path);
}

Tensor image_to_cloud(const ImageRGB& img) {
  const std::size_t n = img.pixel_count();
  Tensor cloud({n, 3});
  for (std::size_t i = 0; i < n * 3; ++i)
    cloud[i] = 2.0 * static_cast<double>(img.rgb[i]) / 255.0 - 1.0;
  return cloud;
}

ImageRGB cloud_to_image(const Tensor& cloud, int width, int height) {
  if (cloud.rank() != 2 || cloud.cols() != 3 ||
      cloud.rows() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("cloud_to_image: cloud shape " + shape_str(cloud.shape()) +
                                " does not match " + std::to_string(width) + "x" +
                                std::to_string(height));
  ImageRGB img;
  img.width = width;
  img.height = height;
  img.rgb.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double v = cloud[i];
    v = v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v);
    const double byte = std::nearbyint((v + 1.0) * 127.5);
    img.rgb[i] = static_cast<std::uint8_t>(byte < 0.0 ? 0.0 : (byte > 255.0 ? 255.0 : byte));
  }
  return img;
}

CloudSampler::CloudSampler(Tensor cloud) : cloud_(std::move(cloud)) {
  if (cloud_.rank() != 2 || cloud_.rows() == 0)
    throw std::invalid_argument("CloudSampler: need a nonempty rank-2 cloud");
}

Tensor CloudSampler::sample(int n, Rng& rng) const {
  const auto rows = static_cast<std::size_t>(n);
  const std::size_t d = cloud_.cols();
  Tensor out({rows, d});
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t k = rng.below(cloud_.rows());
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] = cloud_.at(k, c);
  }
  return out;
}

ImageRGB transfer(const solver::TrainState& state, const ImageRGB& src, ZPolicy policy,
                  std::uint64_t seed) {
  if (state.config.d_in != 3)
    throw std::invalid_argument("transfer: trained model has d_in=" +
                                std::to_string(state.config.d_in) + ", images need 3");
  const Tensor cloud = image_to_cloud(src);
  const std::size_t n = cloud.rows();
  const auto dz = static_cast<std::size_t>(state.config.noise_dim);
  Rng rng(seed);
  Tensor mapped({n, 3});

  if (policy == ZPolicy::fixed_z) {
    // map each distinct color once; every repeat of a color reuses the result
    std::vector<double> z_shared(dz);
    for (auto& v : z_shared) v = rng.uniform(-1.0, 1.0);
    std::unordered_map<std::uint32_t, std::size_t> index;  // packed rgb -> unique row
    std::vector<std::size_t> pixel_to_unique(n);
    std::vector<std::size_t> unique_rows;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t key = static_cast<std::uint32_t>(src.rgb[i * 3]) << 16 |
                                static_cast<std::uint32_t>(src.rgb[i * 3 + 1]) << 8 |
                                static_cast<std::uint32_t>(src.rgb[i * 3 + 2]);
      auto [it, inserted] = index.try_emplace(key, unique_rows.size());
      if (inserted) unique_rows.push_back(i);
      pixel_to_unique[i] = it->second;
    }
    const std::size_t u = unique_rows.size();
    Tensor ux({u, 3}), uz({u, dz});
    for (std::size_t r = 0; r < u; ++r) {
      for (std::size_t c = 0; c < 3; ++c) ux[r * 3 + c] = cloud.at(unique_rows[r], c);
      for (std::size_t c = 0; c < dz; ++c) uz[r * dz + c] = z_shared[c];
    }
    const Tensor uy = nn::generator_apply(state.g_xy, ux, uz);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 3; ++c) mapped[i * 3 + c] = uy.at(pixel_to_unique[i], c);
  } else {
    Tensor z({n, dz});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(-1.0, 1.0);
    mapped = nn::generator_apply(state.g_xy, cloud, z);
  }
  return cloud_to_image(mapped, src.width, src.height);
}

namespace {

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

Tensor subsample_cloud(const ImageRGB& img, std::size_t count) {
  Rng rng(fnv1a(img.rgb) ^ 0x51c0a7e5u);
  const std::size_t n = img.pixel_count();
  Tensor out({count, 3});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = rng.below(n);
    for (std::size_t c = 0; c < 3; ++c)
      out[i * 3 + c] = 2.0 * static_cast<double>(img.rgb[k * 3 + c]) / 255.0 - 1.0;
  }
  return out;
}

}  // namespace

double histogram_match_score(const ImageRGB& out_img, const ImageRGB& target_img) {
  constexpr std::size_t kSubsample = 2000;
  return oracle::energy_distance(subsample_cloud(out_img, kSubsample),
                                 subsample_cloud(target_img, kSubsample));
}

}  // namespace otmap::color
