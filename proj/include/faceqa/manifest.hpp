#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "faceqa/dimensions.hpp"
#include "faceqa/views.hpp"

namespace faceqa {

/// One line of a dataset manifest (JSON Lines):
///   {"id":..,"image_path":..,"bbox":[x0,y0,x1,y1]|null,"mask_path":..|null,
///    "scenario":"indoor-day","mos":[6 reals]|null}
/// Relative paths resolve against the manifest's directory.
struct ManifestRow {
  std::string id;
  std::string image_path;
  std::optional<BoundingBox> bbox;
  std::optional<std::string> mask_path;
  Scenario scenario;
  std::optional<DimensionScores> mos;
};

ManifestRow parse_manifest_line(const std::string& line);
std::string to_manifest_line(const ManifestRow& row);

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

/// Decodes the image and mask referenced by `row`.
ImageRecord load_image_record(const ManifestRow& row, const std::filesystem::path& base_dir);

/// Throws DataError listing every id without six MOS labels.
void require_labels(const std::vector<ManifestRow>& rows);

}  // namespace faceqa
