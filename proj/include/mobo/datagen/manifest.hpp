// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mobo/datagen/dataset.hpp"

namespace mobo::datagen {

/// One manifest line. `image` is relative to the manifest's directory.
struct Quadruplet {
  std::string prompt;
  std::string image;
  std::string question;
  std::string answer;
  std::string meta;
  bool operator==(const Quadruplet&) const = default;
};

inline constexpr const char* kManifestHeader = "# mobo-manifest v1";
inline constexpr const char* kManifestName = "manifest.txt";

/// Writes `dir/manifest.txt` (records in the given order) and returns its
/// path. Fields are tab-separated key=value pairs; backslash, tab and
/// newline are escaped.
std::filesystem::path write_manifest(const std::vector<Quadruplet>& records, const std::filesystem::path& dir);

/// Throws FormatError naming the line for unparsable content and IoError
/// naming the path for an image that does not exist.
std::vector<Quadruplet> load_manifest(const std::filesystem::path& path);

/// Writes every sample's image under `dir/images/` and the manifest next
/// to it.
std::filesystem::path write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir);

Quadruplet to_quadruplet(const Sample& s, const std::string& image_path);

}  // namespace mobo::datagen
