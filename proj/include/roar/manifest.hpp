#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roar/imaging.hpp"

namespace roar {

inline constexpr const char* kManifestHeader = "image_path,patient_id,eye_id,laterality,vcdr,glaucoma,disc_x,disc_y";

struct ManifestRow {
  std::string image_path;  // relative to the manifest directory unless absolute
  std::string patient_id;
  std::string eye_id;
  Laterality laterality = Laterality::Right;
  std::optional<double> vcdr;
  std::optional<bool> glaucoma;
  std::optional<double> disc_x;
  std::optional<double> disc_y;

  /// File stem of image_path; unique within a manifest.
  std::string image_id() const;
  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const ManifestRow& row) const;
  std::vector<std::string> patient_ids() const;  // first-appearance order
};

/// Parses and validates a manifest. With check_files, every image path must exist.
Manifest read_manifest(const std::filesystem::path& path, bool check_files = true);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
std::string format_manifest(const Manifest& manifest);

/// Checks ids, label ranges and unique image ids. Throws ValidationError.
void validate_manifest(const Manifest& manifest);

}  // namespace roar
