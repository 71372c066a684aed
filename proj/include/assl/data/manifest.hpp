#pragma once

#include <string>

#include "assl/data/types.hpp"

namespace assl::data {

enum class FolderLayout { flat, category_subdirs };

/// Walks `root` (one level of subdirectories for the category layout),
/// keeping every decodable PNG/JPEG in lexicographic path order. In the
/// category layout, subdirectory names matching a roof category become
/// labels; any other subdirectory name is kept as the entry tag with no
/// label. Files with an image extension that fail to decode are skipped and
/// counted in the manifest's warnings.
DatasetManifest scan_image_folder(const std::string& root, FolderLayout layout);

/// Reads a `path,label` CSV (header required, label may be empty). Unknown
/// label strings abort with the 1-based data row number; duplicate paths are
/// kept and counted as warnings.
DatasetManifest load_manifest(const std::string& csv_path);

/// Writes the CSV form (UTF-8, LF, header `path,label`).
void save_manifest(const DatasetManifest& manifest, const std::string& csv_path);

}  // namespace assl::data
