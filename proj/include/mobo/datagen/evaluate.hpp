// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mobo/backbones/model_set.hpp"
#include "mobo/datagen/dataset.hpp"

namespace mobo::datagen {

enum class GenevalCategory { single_obj, two_obj, counting, colors, position, color_attr };
inline constexpr std::array<GenevalCategory, 6> kGenevalCategories{
    GenevalCategory::single_obj, GenevalCategory::two_obj,  GenevalCategory::counting,
    GenevalCategory::colors,     GenevalCategory::position, GenevalCategory::color_attr};
std::string to_string(GenevalCategory c);

/// Held-out prompt scenes for one category, deterministic in seed.
std::vector<SceneSpec> geneval_scenes(GenevalCategory c, std::size_t n, std::uint64_t seed);

/// Whether a generated image satisfies the category's claim about `prompt`.
bool geneval_pass(GenevalCategory c, const SceneSpec& prompt, const backbones::Image& generated);

struct GenevalReport {
  std::array<double, 6> scores{};  // indexed like kGenevalCategories
  double overall = 0.0;
};

/// Images for a batch of captions, one noise seed per caption.
using GeneratorFn =
    std::function<std::vector<backbones::Image>(const std::vector<std::string>&, const std::vector<std::uint64_t>&)>;

GenevalReport mini_geneval(const GeneratorFn& generate, std::size_t n_per_category, std::uint64_t seed);
GenevalReport mini_geneval(const backbones::ModelSet& model, std::size_t n_per_category, std::uint64_t seed,
                           std::size_t sampler_steps = 20);

using AnswerFn = std::function<std::string(const backbones::Image&, const std::string&)>;

/// Exact-match accuracy over the records; 0 for an empty set.
double understanding_accuracy(const AnswerFn& answer, const std::vector<Sample>& records);
double understanding_accuracy(const backbones::ModelSet& model, const std::vector<Sample>& records);

/// Greedy decode after [bos] question [sep], stopping at eos or 16 tokens.
std::string answer_question(const backbones::ModelSet& model, const backbones::Image& image,
                            const std::string& question);

}  // namespace mobo::datagen
