#include "faceqa/manifest.hpp"

#include <fstream>

#include "faceqa/image_io.hpp"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

ManifestRow parse_manifest_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest line is not valid JSON: ") + e.what());
  }
  try {
    ManifestRow row;
    row.id = j.at("id").get<std::string>();
    row.image_path = j.at("image_path").get<std::string>();
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      auto b = j["bbox"].get<std::vector<long long>>();
      if (b.size() != 4 || b[0] < 0 || b[1] < 0 || b[2] < 0 || b[3] < 0) {
        throw DataError(row.id + ": bbox must be four non-negative integers");
      }
      row.bbox = BoundingBox{static_cast<std::size_t>(b[0]), static_cast<std::size_t>(b[1]),
                             static_cast<std::size_t>(b[2]), static_cast<std::size_t>(b[3])};
    }
    if (j.contains("mask_path") && !j["mask_path"].is_null()) {
      row.mask_path = j["mask_path"].get<std::string>();
    }
    row.scenario = parse_scenario(j.value("scenario", std::string("indoor-day")));
    if (j.contains("mos") && !j["mos"].is_null()) {
      auto m = j["mos"].get<std::vector<double>>();
      if (m.size() != kNumDimensions) throw DataError(row.id + ": mos must hold six values");
      DimensionScores s{};
      std::copy(m.begin(), m.end(), s.begin());
      row.mos = s;
    }
    return row;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad manifest row: ") + e.what());
  }
}

std::string to_manifest_line(const ManifestRow& row) {
  json j;
  j["id"] = row.id;
  j["image_path"] = row.image_path;
  j["bbox"] = row.bbox ? json::array({row.bbox->x0, row.bbox->y0, row.bbox->x1, row.bbox->y1})
                       : json(nullptr);
  j["mask_path"] = row.mask_path ? json(*row.mask_path) : json(nullptr);
  j["scenario"] = to_string(row.scenario);
  j["mos"] = row.mos ? json(std::vector<double>(row.mos->begin(), row.mos->end())) : json(nullptr);
  return j.dump();
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(parse_manifest_line(line));
  }
  return rows;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  for (const auto& r : rows) out << to_manifest_line(r) << '\n';
}

ImageRecord load_image_record(const ManifestRow& row, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base_dir / fp;
  };
  ImageRecord rec;
  rec.id = row.id;
  rec.pixels = image_to_tensor(read_image(resolve(row.image_path)));
  rec.face_bbox = row.bbox;
  if (row.mask_path) rec.eyes_mouth_mask = image_to_mask(read_image(resolve(*row.mask_path)));
  rec.scenario = row.scenario;
  return rec;
}

void require_labels(const std::vector<ManifestRow>& rows) {
  std::string missing;
  for (const auto& r : rows) {
    if (!r.mos) missing += (missing.empty() ? "" : ", ") + r.id;
  }
  if (!missing.empty()) throw DataError("rows without MOS labels: " + missing);
}

}  // namespace faceqa
