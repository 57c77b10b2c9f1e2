// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mobo/datagen/scene.hpp"

namespace mobo::datagen {

/// Closed word-level vocabulary of the synthetic grammar.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0, kBos = 1, kEos = 2, kSep = 3, kUnk = 4;

  static const Vocabulary& standard();

  std::size_t size() const { return words_.size(); }
  std::size_t id(const std::string& word) const;  // kUnk if unknown
  const std::string& word(std::size_t id) const;
  /// Whitespace-separated words to ids (no bos/eos added).
  std::vector<std::size_t> encode(const std::string& text) const;
  std::string decode(const std::vector<std::size_t>& ids) const;

 private:
  explicit Vocabulary(std::vector<std::string> words);
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// "r1c2"
std::string cell_word(std::size_t cell);

/// "a red circle at r1c2 and a blue square at r3c0", objects in cell order.
std::string caption_of(const SceneSpec& spec);

enum class QaKind { counting, color, position, existence };
std::string to_string(QaKind k);

struct QaPair {
  QaKind kind;
  std::string question;
  std::string answer;
};

/// Draws a template, resampling until one applies to the scene; the answer
/// is derived from the scene.
QaPair qa_of(const SceneSpec& spec, std::uint64_t seed);

/// Every answer string the templates can produce.
const std::vector<std::string>& answer_vocabulary();

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& s);
/// One caption in eight is held out for evaluation.
bool is_eval_prompt(const std::string& caption);

}  // namespace mobo::datagen
