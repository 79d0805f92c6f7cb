#pragma once

#include <optional>
#include <string>

#include "faceqa/errors.hpp"
#include "faceqa/tensor.hpp"

namespace faceqa {

enum class Location { indoor, outdoor, its };
enum class Lighting { day, night };

struct Scenario {
  Location location = Location::indoor;
  Lighting lighting = Lighting::day;
  bool operator==(const Scenario&) const = default;
};

/// "indoor-day", "its-night", ...
std::string to_string(const Scenario& s);
Scenario parse_scenario(const std::string& text);

/// Pixel-space face box, half-open: columns [x0, x1), rows [y0, y1).
struct BoundingBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t width() const { return x1 - x0; }
  std::size_t height() const { return y1 - y0; }
  bool operator==(const BoundingBox&) const = default;
};

struct ImageRecord {
  std::string id;
  Tensor pixels;  // [3,H,W], values in [0,1]
  std::optional<BoundingBox> face_bbox;
  std::optional<Tensor> eyes_mouth_mask;  // [H,W], {0,1}
  Scenario scenario;
};

/// The three model inputs: whole frame, face crop, eyes-and-mouth crop.
struct ViewTriplet {
  Tensor original;
  Tensor face;
  Tensor eyes_mouth;
};

struct ViewOptions {
  std::size_t output_size = 224;
  std::size_t min_face_side = 96;
};

class AnnotationMissingError : public DataError {
 public:
  using DataError::DataError;
};
class BelowMinimumFaceError : public DataError {
 public:
  using DataError::DataError;
};
class MaskMissingError : public DataError {
 public:
  using DataError::DataError;
};

/// Bilinear resampling of a [C,H,W] tensor with half-pixel centres
/// (corners not aligned); source coordinates are clamped to the image.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

/// Rows [y0,y1) and columns [x0,x1) of a [C,H,W] or [H,W] tensor.
Tensor crop(const Tensor& image, const BoundingBox& box);

/// Checks pixel range, bbox bounds and mask shape/values; throws DataError.
void validate_record(const ImageRecord& record);

/// original = resized frame; face = resized bbox crop; eyes_mouth = bbox crop
/// multiplied by the cropped mask, then resized. Missing mask is an error; pass
/// an all-ones mask explicitly to use the full face.
ViewTriplet build_views(const ImageRecord& record, const ViewOptions& options = {});

}  // namespace faceqa
