#include "assl/data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "assl/data/image_io.hpp"

namespace fs = std::filesystem;

namespace assl::data {

namespace {

bool has_image_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

DatasetManifest scan_image_folder(const std::string& root,
                                  FolderLayout layout) {
  if (!fs::exists(root) || !fs::is_directory(root))
    throw std::runtime_error("scan_image_folder: missing directory " + root);

  DatasetManifest manifest;
  manifest.root = root;

  struct Candidate {
    std::string rel;
    std::optional<int> label;
    std::string tag;
  };
  std::vector<Candidate> candidates;

  if (layout == FolderLayout::flat) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_regular_file() && has_image_extension(entry.path()))
        candidates.push_back({entry.path().filename().string(), std::nullopt, ""});
    }
  } else {
    for (const auto& sub : fs::directory_iterator(root)) {
      if (!sub.is_directory()) continue;
      const std::string dir_name = sub.path().filename().string();
      auto cls = roof_class_from_string(dir_name);
      for (const auto& entry : fs::directory_iterator(sub.path())) {
        if (!entry.is_regular_file() || !has_image_extension(entry.path()))
          continue;
        Candidate c;
        c.rel = dir_name + "/" + entry.path().filename().string();
        if (cls)
          c.label = static_cast<int>(*cls);
        else
          c.tag = dir_name;
        candidates.push_back(std::move(c));
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.rel < b.rel; });

  for (auto& c : candidates) {
    if (!decode_image((fs::path(root) / c.rel).string())) {
      ++manifest.warnings;
      continue;
    }
    manifest.entries.push_back({c.rel, c.label, c.tag});
  }
  return manifest;
}

DatasetManifest load_manifest(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("load_manifest: cannot open " + csv_path);

  DatasetManifest manifest;
  manifest.root = fs::path(csv_path).parent_path().string();
  if (manifest.root.empty()) manifest.root = ".";

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_manifest: empty file " + csv_path);
  if (trim(line) != "path,label")
    throw std::runtime_error("load_manifest: expected header 'path,label' in " +
                             csv_path);

  std::set<std::string> seen;
  int64_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    size_t comma = line.find(',');
    std::string path_field =
        trim(comma == std::string::npos ? line : line.substr(0, comma));
    std::string label_field =
        comma == std::string::npos ? "" : trim(line.substr(comma + 1));
    if (path_field.empty())
      throw std::runtime_error("load_manifest: empty path at row " +
                               std::to_string(row));
    ManifestEntry entry;
    entry.rel_path = path_field;
    if (!label_field.empty()) {
      auto cls = roof_class_from_string(label_field);
      if (!cls)
        throw std::runtime_error("load_manifest: unknown label '" + label_field +
                                 "' at row " + std::to_string(row));
      entry.label = static_cast<int>(*cls);
    }
    if (!seen.insert(path_field).second) ++manifest.warnings;
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest,
                   const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw std::runtime_error("save_manifest: cannot write " + csv_path);
  out << "path,label\n";
  for (const auto& e : manifest.entries) {
    out << e.rel_path << ",";
    if (e.label) out << to_string(roof_class_from_code(*e.label));
    out << "\n";
  }
}

}  // namespace assl::data
