// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mobo/datagen/scene.hpp"
#include "mobo/datagen/text.hpp"

namespace mobo::datagen {

/// One generated record held in memory.
struct Sample {
  SceneSpec spec;
  backbones::Image image;
  std::string caption;
  QaPair qa;
};

/// splitmix64 of (a, b); used to derive independent per-record seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Scene, rendering, caption and one Q/A pair from a single seed.
Sample make_sample(std::uint64_t seed);

enum class Split { train, eval, any };

struct CorpusRequest {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  std::size_t min_objects = 1;
};

/// Draws samples with seeds mix_seed(seed, 0), mix_seed(seed, 1), ... and
/// keeps those that satisfy the request, in draw order.
std::vector<Sample> make_corpus(const CorpusRequest& req);

/// [bos] caption
std::vector<std::size_t> prompt_tokens(const std::string& caption);
/// [bos] question [sep]; the model continues with the answer and eos.
std::vector<std::size_t> question_prefix(const std::string& question);

}  // namespace mobo::datagen
