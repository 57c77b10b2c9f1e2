// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/dataset.hpp"

namespace mobo::datagen {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Sample make_sample(std::uint64_t seed) {
  Sample s;
  s.spec = gen_scene(seed);
  s.image = render(s.spec);
  s.caption = caption_of(s.spec);
  s.qa = qa_of(s.spec, mix_seed(seed, 1));
  return s;
}

std::vector<Sample> make_corpus(const CorpusRequest& req) {
  std::vector<Sample> out;
  out.reserve(req.count);
  for (std::uint64_t i = 0; out.size() < req.count; ++i) {
    const std::uint64_t seed = mix_seed(req.seed, i);
    const SceneSpec spec = gen_scene(seed);
    if (spec.objects.size() < req.min_objects) continue;
    if (req.split != Split::any) {
      const bool held_out = is_eval_prompt(caption_of(spec));
      if (held_out != (req.split == Split::eval)) continue;
    }
    out.push_back(make_sample(seed));
  }
  return out;
}

std::vector<std::size_t> prompt_tokens(const std::string& caption) {
  std::vector<std::size_t> t{Vocabulary::kBos};
  for (std::size_t id : Vocabulary::standard().encode(caption)) t.push_back(id);
  return t;
}

std::vector<std::size_t> question_prefix(const std::string& question) {
  std::vector<std::size_t> t{Vocabulary::kBos};
  for (std::size_t id : Vocabulary::standard().encode(question)) t.push_back(id);
  t.push_back(Vocabulary::kSep);
  return t;
}

}  // namespace mobo::datagen
