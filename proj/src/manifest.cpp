#include "roar/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "roar/error.hpp"

namespace roar {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  fields.push_back(field);
  return fields;
}

std::optional<double> parse_optional_double(const std::string& text, const std::string& column, int line) {
  if (text.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("manifest line {}: column {} is not a number: '{}'", line, column, text));
  }
}

std::string format_optional(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string{}; }

}  // namespace

std::string ManifestRow::image_id() const { return std::filesystem::path(image_path).stem().string(); }

std::filesystem::path Manifest::resolve(const ManifestRow& row) const {
  const std::filesystem::path p(row.image_path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::string> Manifest::patient_ids() const {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.patient_id).second) ids.push_back(r.patient_id);
  }
  return ids;
}

void validate_manifest(const Manifest& manifest) {
  std::unordered_set<std::string> ids;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& r = manifest.rows[i];
    const auto where = fmt::format("row {} ({})", i + 1, r.image_path);
    if (r.image_path.empty()) problems.push_back(fmt::format("row {}: empty image_path", i + 1));
    if (r.patient_id.empty()) problems.push_back(where + ": empty patient_id");
    if (r.eye_id.empty()) problems.push_back(where + ": empty eye_id");
    if (r.vcdr && !(*r.vcdr >= 0.0 && *r.vcdr <= 1.0)) problems.push_back(where + ": vcdr outside [0,1]");
    if (r.disc_x.has_value() != r.disc_y.has_value()) problems.push_back(where + ": disc_x and disc_y must both be set");
    if (!ids.insert(r.image_id()).second) problems.push_back(where + ": duplicate image id " + r.image_id());
  }
  if (!problems.empty()) throw ValidationError(fmt::format("invalid manifest: {}", fmt::join(problems, "; ")));
}

Manifest read_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("manifest not found: '{}'", path.string()));
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(fmt::format("{}: empty manifest", path.string()));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ValidationError(fmt::format("{}: unexpected header '{}' (expected '{}')", path.string(), line, kManifestHeader));
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) {
      throw ValidationError(fmt::format("{} line {}: expected 8 fields, got {}", path.string(), line_no, f.size()));
    }
    ManifestRow r;
    r.image_path = f[0];
    r.patient_id = f[1];
    r.eye_id = f[2];
    try {
      r.laterality = parse_laterality(f[3]);
    } catch (const InvalidArgument& e) {
      throw ValidationError(fmt::format("{} line {}: {}", path.string(), line_no, e.what()));
    }
    r.vcdr = parse_optional_double(f[4], "vcdr", line_no);
    if (!f[5].empty()) {
      if (f[5] != "0" && f[5] != "1") {
        throw ValidationError(fmt::format("{} line {}: glaucoma must be 0 or 1", path.string(), line_no));
      }
      r.glaucoma = f[5] == "1";
    }
    r.disc_x = parse_optional_double(f[6], "disc_x", line_no);
    r.disc_y = parse_optional_double(f[7], "disc_y", line_no);
    m.rows.push_back(std::move(r));
  }
  validate_manifest(m);
  if (check_files) {
    for (const auto& r : m.rows) {
      if (!std::filesystem::exists(m.resolve(r))) {
        throw IoError(fmt::format("manifest image not found: '{}'", m.resolve(r).string()));
      }
    }
  }
  return m;
}

std::string format_manifest(const Manifest& manifest) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : manifest.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.image_path, r.patient_id, r.eye_id, to_string(r.laterality),
                       format_optional(r.vcdr), r.glaucoma ? (*r.glaucoma ? "1" : "0") : "",
                       format_optional(r.disc_x), format_optional(r.disc_y));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out << format_manifest(manifest);
}

}  // namespace roar
