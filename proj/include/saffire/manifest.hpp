#pragma once

#include "saffire/features.hpp"
#include "saffire/geometry.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace saffire {

struct ManifestRecord {
  std::string image; // path relative to the manifest's directory
  OrientedRect roi;
};

/// Annotation list shared by the generator, training and evaluation.
///
///   # saffire-manifest v1
///   # family=segment            (optional)
///   image,center_x,center_y,width,height,orientation_deg
///   img_0000.png,181.5,240.25,150,80,-90
struct Manifest {
  std::filesystem::path base_dir;
  std::optional<FeatureFamily> family;
  std::vector<ManifestRecord> records;

  std::filesystem::path image_path(std::size_t i) const { return base_dir / records[i].image; }
};

Manifest read_manifest(const std::filesystem::path &path);
void write_manifest(const std::filesystem::path &path, const Manifest &manifest);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

} // namespace saffire
