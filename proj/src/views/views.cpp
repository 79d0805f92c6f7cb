#include "faceqa/views.hpp"

#include <algorithm>
#include <cmath>

namespace faceqa {

std::string to_string(const Scenario& s) {
  std::string loc = s.location == Location::indoor    ? "indoor"
                    : s.location == Location::outdoor ? "outdoor"
                                                      : "its";
  return loc + (s.lighting == Lighting::day ? "-day" : "-night");
}

Scenario parse_scenario(const std::string& text) {
  const auto dash = text.find('-');
  if (dash == std::string::npos) throw DataError("bad scenario: " + text);
  const std::string loc = text.substr(0, dash), light = text.substr(dash + 1);
  Scenario s;
  if (loc == "indoor") s.location = Location::indoor;
  else if (loc == "outdoor") s.location = Location::outdoor;
  else if (loc == "its") s.location = Location::its;
  else throw DataError("bad scenario location: " + text);
  if (light == "day") s.lighting = Lighting::day;
  else if (light == "night") s.lighting = Lighting::night;
  else throw DataError("bad scenario lighting: " + text);
  return s;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw DimensionError("resize target must be non-empty");
  if (image.rank() != 3) throw DimensionError("resize expects [C,H,W], got " + shape_str(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image.detach();

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t out, std::size_t in) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(out_h, h), tx = taps(out_w, w);
  auto src = image.data();
  std::vector<double> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = &src[ch * h * w];
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& [y0, y1, fy] = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& [x0, x1, fx] = tx[ox];
        const double top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
        const double bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
        out[(ch * out_h + oy) * out_w + ox] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return Tensor({c, out_h, out_w}, std::move(out));
}

Tensor crop(const Tensor& image, const BoundingBox& box) {
  const bool planar = image.rank() == 2;
  if (!planar && image.rank() != 3) throw DimensionError("crop expects [C,H,W] or [H,W]");
  const std::size_t c = planar ? 1 : image.dim(0);
  const std::size_t h = image.dim(planar ? 0 : 1), w = image.dim(planar ? 1 : 2);
  if (!(box.x0 < box.x1 && box.x1 <= w && box.y0 < box.y1 && box.y1 <= h)) {
    throw DimensionError("crop box outside image");
  }
  const std::size_t ch = box.height(), cw = box.width();
  auto src = image.data();
  std::vector<double> out(c * ch * cw);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < ch; ++y)
      for (std::size_t x = 0; x < cw; ++x)
        out[(k * ch + y) * cw + x] = src[(k * h + box.y0 + y) * w + box.x0 + x];
  return planar ? Tensor({ch, cw}, std::move(out)) : Tensor({c, ch, cw}, std::move(out));
}

void validate_record(const ImageRecord& r) {
  if (!r.pixels.defined() || r.pixels.rank() != 3 || r.pixels.dim(0) != 3) {
    throw DataError(r.id + ": pixels must be a [3,H,W] tensor");
  }
  for (double v : r.pixels.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError(r.id + ": pixel values must lie in [0,1]");
  }
  const std::size_t h = r.pixels.dim(1), w = r.pixels.dim(2);
  if (r.face_bbox) {
    const auto& b = *r.face_bbox;
    if (!(b.x0 < b.x1 && b.x1 <= w && b.y0 < b.y1 && b.y1 <= h)) {
      throw DataError(r.id + ": face bbox outside the image");
    }
  }
  if (r.eyes_mouth_mask) {
    const auto& m = *r.eyes_mouth_mask;
    if (m.shape() != Shape{h, w}) throw DataError(r.id + ": mask shape differs from image");
    for (double v : m.data()) {
      if (v != 0.0 && v != 1.0) throw DataError(r.id + ": mask must be binary");
    }
  }
}

ViewTriplet build_views(const ImageRecord& record, const ViewOptions& options) {
  validate_record(record);
  if (!record.face_bbox) throw AnnotationMissingError(record.id + ": face bbox missing");
  const auto& box = *record.face_bbox;
  if (box.width() < options.min_face_side || box.height() < options.min_face_side) {
    throw BelowMinimumFaceError(record.id + ": face " + std::to_string(box.width()) + "x" +
                                std::to_string(box.height()) + " below minimum side " +
                                std::to_string(options.min_face_side));
  }
  if (!record.eyes_mouth_mask) throw MaskMissingError(record.id + ": eyes-mouth mask missing");

  const std::size_t s = options.output_size;
  Tensor face_crop = crop(record.pixels, box);
  Tensor mask_crop = crop(*record.eyes_mouth_mask, box);
  Tensor masked = face_crop.detach();
  {
    auto px = masked.mutable_data();
    auto m = mask_crop.data();
    const std::size_t plane = m.size();
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i) px[c * plane + i] *= m[i];
  }
  return {resize_bilinear(record.pixels, s, s), resize_bilinear(face_crop, s, s),
          resize_bilinear(masked, s, s)};
}

}  // namespace faceqa
