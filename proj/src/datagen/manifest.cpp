// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "mobo/errors.hpp"
#include "mobo/flowsampler/sampler.hpp"

namespace mobo::datagen {

namespace fs = std::filesystem;

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\t') out += "\\t";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

std::string unescape(const std::string& s, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw FormatError("manifest line " + std::to_string(line) + ": dangling escape");
    if (s[i] == '\\') out += '\\';
    else if (s[i] == 't') out += '\t';
    else if (s[i] == 'n') out += '\n';
    else throw FormatError("manifest line " + std::to_string(line) + ": unknown escape \\" + s[i]);
  }
  return out;
}

constexpr std::array<const char*, 5> kKeys{"prompt", "image", "question", "answer", "meta"};

}  // namespace

Quadruplet to_quadruplet(const Sample& s, const std::string& image_path) {
  return {s.caption, image_path, s.qa.question, s.qa.answer, encode_meta(s.spec)};
}

fs::path write_manifest(const std::vector<Quadruplet>& records, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path path = dir / kManifestName;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    const std::array<const std::string*, 5> vals{&r.prompt, &r.image, &r.question, &r.answer, &r.meta};
    for (std::size_t i = 0; i < kKeys.size(); ++i) {
      if (i) out << '\t';
      out << kKeys[i] << '=' << escape(*vals[i]);
    }
    out << '\n';
  }
  if (!out.flush()) throw IoError("write failed for " + path.string());
  return path;
}

std::vector<Quadruplet> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<Quadruplet> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    ++line_no;
    if (end == std::string::npos) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": truncated record (no line terminator)");
    }
    const std::string line = content.substr(pos, end - pos);
    pos = end + 1;
    if (line_no == 1) {
      if (line != kManifestHeader) throw FormatError("manifest line 1: expected header '" + std::string(kManifestHeader) + "'");
      continue;
    }
    std::array<std::string, 5> vals;
    std::array<bool, 5> seen{};
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      const std::string field = line.substr(start, tab == std::string::npos ? std::string::npos : tab - start);
      const std::size_t eq = field.find('=');
      if (eq == std::string::npos) {
        throw FormatError("manifest line " + std::to_string(line_no) + ": field without '='");
      }
      const std::string key = field.substr(0, eq);
      std::size_t k = 0;
      while (k < kKeys.size() && key != kKeys[k]) ++k;
      if (k == kKeys.size()) throw FormatError("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      if (seen[k]) throw FormatError("manifest line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
      seen[k] = true;
      vals[k] = unescape(field.substr(eq + 1), line_no);
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    for (std::size_t k = 0; k < kKeys.size(); ++k) {
      if (!seen[k] || vals[k].empty()) {
        throw FormatError("manifest line " + std::to_string(line_no) + ": missing or empty '" + kKeys[k] + "'");
      }
    }
    Quadruplet q{vals[0], vals[1], vals[2], vals[3], vals[4]};
    try {
      decode_meta(q.meta);
    } catch (const FormatError& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    const fs::path img = path.parent_path() / q.image;
    if (!fs::exists(img)) throw IoError("manifest line " + std::to_string(line_no) + ": missing image " + img.string());
    out.push_back(std::move(q));
  }
  if (line_no == 0) throw FormatError("manifest line 1: empty file");
  return out;
}

fs::path write_dataset(const std::vector<Sample>& samples, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::vector<Quadruplet> records;
  records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.ppm", i);
    flowsampler::write_ppm(dir / name, samples[i].image);
    records.push_back(to_quadruplet(samples[i], name));
  }
  return write_manifest(records, dir);
}

}  // namespace mobo::datagen
