#include "faceqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "faceqa/image_io.hpp"

namespace faceqa {

namespace {

constexpr double kOverallBlend[5] = {0.10, 0.40, 0.05, 0.15, 0.30};

using Rgb = std::array<double, 3>;

// Planar [3][S][S] canvas.
struct Canvas {
  std::size_t size;
  std::vector<double> v;
  explicit Canvas(std::size_t s) : size(s), v(3 * s * s, 0.0) {}
  double& at(std::size_t c, std::size_t y, std::size_t x) { return v[(c * size + y) * size + x]; }
};

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
  Ellipse scaled(double f) const { return {cx, cy, rx * f, ry * f}; }
};

void fill(Canvas& img, const Ellipse& e, const Rgb& color) {
  for (std::size_t y = 0; y < img.size; ++y)
    for (std::size_t x = 0; x < img.size; ++x)
      if (e.contains(x + 0.5, y + 0.5))
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

void swap_patches(Canvas& img, const BoundingBox& box, std::size_t count, std::mt19937_64& rng) {
  const std::size_t p = std::max<std::size_t>(2, img.size / 8);
  if (box.width() <= p || box.height() <= p) return;
  std::uniform_int_distribution<std::size_t> px(box.x0, box.x1 - p), py(box.y0, box.y1 - p);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t ax = px(rng), ay = py(rng), bx = px(rng), by = py(rng);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t dy = 0; dy < p; ++dy)
        for (std::size_t dx = 0; dx < p; ++dx) std::swap(img.at(c, ay + dy, ax + dx), img.at(c, by + dy, bx + dx));
  }
}

void gaussian_blur(Canvas& img, double sigma) {
  if (sigma < 0.05) return;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double total = 0.0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& w : k) w /= total;
  const int s = static_cast<int>(img.size);
  std::vector<double> tmp(img.v.size());
  auto clampi = [s](int i) { return std::clamp(i, 0, s - 1); };
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(c, y, clampi(x + i));
        tmp[(c * s + y) * s + x] = acc;
      }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[(c * s + clampi(y + i)) * s + x];
        img.at(c, y, x) = acc;
      }
}

}  // namespace

DimensionScores labels_from_corruption(const Corruption& c) {
  const double m[5] = {c.noise, c.blur, c.desaturation, c.contrast, c.swap};
  DimensionScores out{};
  double overall = 0.0;
  for (std::size_t d = 0; d < 5; ++d) {
    out[d] = 5.0 - 4.0 * std::clamp(m[d], 0.0, 1.0);
    overall += kOverallBlend[d] * out[d];
  }
  out[kOverall] = overall;
  return out;
}

SynthSample render_synthetic(std::uint64_t seed, std::size_t index, const Corruption& corruption,
                             const SynthOptions& options) {
  const std::size_t s = options.size;
  if (s < 16) throw ConfigError("synthetic frames need at least 16 pixels per side");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double fs = static_cast<double>(s);

  Canvas img(s);
  const Rgb top{u(rng), u(rng), u(rng)}, bottom{u(rng), u(rng), u(rng)};
  for (std::size_t y = 0; y < s; ++y) {
    const double t = (y + 0.5) / fs;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t x = 0; x < s; ++x) img.at(c, y, x) = (1 - t) * top[c] + t * bottom[c];
  }

  const Ellipse face{fs * jitter(0.45, 0.55), fs * jitter(0.5, 0.56), fs * jitter(0.26, 0.3), fs * jitter(0.33, 0.38)};
  fill(img, face, {jitter(0.75, 0.95), jitter(0.55, 0.75), jitter(0.4, 0.6)});
  const Rgb iris{jitter(0.0, 0.4), jitter(0.2, 0.6), jitter(0.3, 0.8)};
  const Ellipse eyes[2] = {{face.cx - 0.4 * face.rx, face.cy - 0.28 * face.ry, 0.2 * face.rx, 0.11 * face.ry},
                           {face.cx + 0.4 * face.rx, face.cy - 0.28 * face.ry, 0.2 * face.rx, 0.11 * face.ry}};
  const Ellipse mouth{face.cx, face.cy + 0.5 * face.ry, 0.45 * face.rx, 0.1 * face.ry};
  for (const auto& e : eyes) {
    fill(img, e, {0.95, 0.95, 0.95});
    fill(img, e.scaled(0.55), iris);
  }
  fill(img, mouth, {jitter(0.7, 0.9), jitter(0.1, 0.3), jitter(0.2, 0.35)});

  // 2x2 luminance texture gives every frame fine detail.
  for (std::size_t y = 0; y < s; y += 2)
    for (std::size_t x = 0; x < s; x += 2) {
      const double t = options.texture_amplitude * (2.0 * u(rng) - 1.0);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t dy = 0; dy < 2 && y + dy < s; ++dy)
          for (std::size_t dx = 0; dx < 2 && x + dx < s; ++dx) img.at(c, y + dy, x + dx) += t;
    }
  for (auto& v : img.v) v = std::clamp(v, 0.0, 1.0);

  auto lo = [&](double v) { return static_cast<std::size_t>(std::clamp(std::floor(v), 0.0, fs)); };
  auto hi = [&](double v) { return static_cast<std::size_t>(std::clamp(std::ceil(v), 0.0, fs)); };
  const BoundingBox box{lo(face.cx - face.rx), lo(face.cy - face.ry), hi(face.cx + face.rx), hi(face.cy + face.ry)};

  std::vector<double> mask(s * s, 0.0);
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      if (eyes[0].scaled(1.6).contains(px, py) || eyes[1].scaled(1.6).contains(px, py) ||
          mouth.scaled(1.6).contains(px, py))
        mask[y * s + x] = 1.0;
    }

  const Corruption c{std::clamp(corruption.noise, 0.0, 1.0), std::clamp(corruption.blur, 0.0, 1.0),
                     std::clamp(corruption.desaturation, 0.0, 1.0), std::clamp(corruption.contrast, 0.0, 1.0),
                     std::clamp(corruption.swap, 0.0, 1.0)};
  swap_patches(img, box, static_cast<std::size_t>(std::lround(c.swap * options.max_swaps)), rng);
  const std::size_t n = s * s;
  for (std::size_t i = 0; i < n; ++i) {
    const double luma = 0.299 * img.v[i] + 0.587 * img.v[n + i] + 0.114 * img.v[2 * n + i];
    for (std::size_t ch = 0; ch < 3; ++ch) img.v[ch * n + i] += c.desaturation * (luma - img.v[ch * n + i]);
  }
  double mean = 0.0;
  for (double v : img.v) mean += v;
  mean /= static_cast<double>(img.v.size());
  const double keep = 1.0 - options.max_contrast_compression * c.contrast;
  for (auto& v : img.v) v = mean + keep * (v - mean);
  gaussian_blur(img, c.blur * options.max_blur_sigma);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& v : img.v) v = std::clamp(v + c.noise * options.max_noise_std * noise(rng), 0.0, 1.0);

  SynthSample out;
  // Round through 8 bits so in-memory samples equal their PNG files.
  out.record.id = "synth" + std::to_string(index);
  out.record.pixels = image_to_tensor(tensor_to_image(Tensor({3, s, s}, std::move(img.v))));
  out.record.face_bbox = box;
  out.record.eyes_mouth_mask = Tensor({s, s}, std::move(mask));
  out.record.scenario = Scenario{static_cast<Location>(index % 3), static_cast<Lighting>((index / 3) % 2)};
  out.corruption = c;
  out.labels = labels_from_corruption(c);
  return out;
}

std::vector<SynthSample> make_synthetic_set(std::uint64_t seed, std::size_t count, const SynthOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double m[5];
    for (std::size_t d = 0; d < 5; ++d) {
      const double v = u(rng);
      m[d] = options.graded[d] ? v : 0.0;
    }
    const Corruption c{m[0], m[1], m[2], m[3], m[4]};
    out.push_back(render_synthetic(seed, i, c, options));
  }
  return out;
}

void write_synthetic_set(const std::filesystem::path& dir, const std::vector<SynthSample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::vector<ManifestRow> rows;
  for (const auto& s : samples) {
    const std::string image = "images/" + s.record.id + ".png", mask = "masks/" + s.record.id + ".png";
    write_png(dir / image, tensor_to_image(s.record.pixels));
    const Tensor& m = *s.record.eyes_mouth_mask;
    const std::size_t h = m.dim(0), w = m.dim(1);
    std::vector<double> rgb(3 * h * w);
    for (std::size_t c = 0; c < 3; ++c) std::copy(m.data().begin(), m.data().end(), rgb.begin() + c * h * w);
    write_png(dir / mask, tensor_to_image(Tensor({3, h, w}, std::move(rgb))));
    rows.push_back({s.record.id, image, s.record.face_bbox, mask, s.record.scenario, s.labels});
  }
  write_manifest(dir / "manifest.jsonl", rows);
}

ViewOptions synthetic_view_options(std::size_t input_size) { return ViewOptions{input_size, 8}; }

}  // namespace faceqa
