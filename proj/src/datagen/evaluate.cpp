// SPDX-License-Identifier: Apache-2.0
#include "mobo/datagen/evaluate.hpp"

#include <algorithm>
#include <random>

#include "mobo/datagen/detector.hpp"
#include "mobo/flowsampler/sampler.hpp"

namespace mobo::datagen {

std::string to_string(GenevalCategory c) {
  switch (c) {
    case GenevalCategory::single_obj: return "single_obj";
    case GenevalCategory::two_obj: return "two_obj";
    case GenevalCategory::counting: return "counting";
    case GenevalCategory::colors: return "colors";
    case GenevalCategory::position: return "position";
    case GenevalCategory::color_attr: return "color_attr";
  }
  return "?";
}

namespace {

SceneSpec draw_category_scene(GenevalCategory c, std::mt19937_64& rng) {
  auto pick_shape = [&] { return kShapes[rng() % kShapes.size()]; };
  auto pick_color = [&] { return kColors[rng() % kColors.size()]; };
  std::size_t n = 1;
  if (c == GenevalCategory::two_obj || c == GenevalCategory::position || c == GenevalCategory::color_attr) n = 2;
  if (c == GenevalCategory::counting) n = 2 + rng() % 2;
  std::array<std::size_t, kGrid * kGrid> cells{};
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(cells[i], cells[i + rng() % (cells.size() - i)]);
  SceneSpec s;
  const ShapeKind s0 = pick_shape();
  const Color c0 = pick_color();
  for (std::size_t i = 0; i < n; ++i) {
    ShapeKind shape = s0;
    Color color = c0;
    if (i > 0 && c != GenevalCategory::counting) {
      do shape = pick_shape();
      while (shape == s0);
      color = pick_color();
      if (c == GenevalCategory::color_attr)
        while (color == c0) color = pick_color();
    }
    s.objects.push_back({shape, color, cells[i]});
  }
  std::sort(s.objects.begin(), s.objects.end(), [](const auto& a, const auto& b) { return a.cell < b.cell; });
  return s;
}

const SceneObject* find(const SceneSpec& s, ShapeKind shape) {
  for (const auto& o : s.objects)
    if (o.shape == shape) return &o;
  return nullptr;
}

int sign(long v) { return (v > 0) - (v < 0); }

}  // namespace

std::vector<SceneSpec> geneval_scenes(GenevalCategory c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x6e0 + static_cast<std::uint64_t>(c)));
  std::vector<SceneSpec> out;
  while (out.size() < n) {
    SceneSpec s = draw_category_scene(c, rng);
    if (is_eval_prompt(caption_of(s))) out.push_back(std::move(s));
  }
  return out;
}

bool geneval_pass(GenevalCategory c, const SceneSpec& prompt, const backbones::Image& generated) {
  const SceneSpec seen = detect(generated);
  const SceneObject& first = prompt.objects.front();
  switch (c) {
    case GenevalCategory::single_obj: return find(seen, first.shape) != nullptr;
    case GenevalCategory::two_obj:
      return find(seen, prompt.objects[0].shape) && find(seen, prompt.objects[1].shape);
    case GenevalCategory::counting: {
      std::size_t n = 0;
      for (const auto& o : seen.objects) n += o.shape == first.shape;
      return n == prompt.objects.size();
    }
    case GenevalCategory::colors:
      for (const auto& o : seen.objects)
        if (o.shape == first.shape && o.color == first.color) return true;
      return false;
    case GenevalCategory::position: {
      const SceneObject* a = find(seen, prompt.objects[0].shape);
      const SceneObject* b = find(seen, prompt.objects[1].shape);
      if (!a || !b) return false;
      const auto& pa = prompt.objects[0];
      const auto& pb = prompt.objects[1];
      return sign(long(a->row()) - long(b->row())) == sign(long(pa.row()) - long(pb.row())) &&
             sign(long(a->col()) - long(b->col())) == sign(long(pa.col()) - long(pb.col()));
    }
    case GenevalCategory::color_attr:
      for (const auto& want : prompt.objects) {
        bool ok = false;
        for (const auto& o : seen.objects) ok = ok || (o.shape == want.shape && o.color == want.color);
        if (!ok) return false;
      }
      return true;
  }
  return false;
}

GenevalReport mini_geneval(const GeneratorFn& generate, std::size_t n_per_category, std::uint64_t seed) {
  GenevalReport rep;
  if (n_per_category == 0) return rep;
  for (std::size_t ci = 0; ci < kGenevalCategories.size(); ++ci) {
    const auto cat = kGenevalCategories[ci];
    const auto scenes = geneval_scenes(cat, n_per_category, seed);
    std::vector<std::string> captions;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      captions.push_back(caption_of(scenes[i]));
      seeds.push_back(mix_seed(seed, 1000 * ci + i));
    }
    const auto images = generate(captions, seeds);
    std::size_t pass = 0;
    for (std::size_t i = 0; i < scenes.size() && i < images.size(); ++i) {
      try {
        pass += geneval_pass(cat, scenes[i], images[i]);
      } catch (const std::exception&) {
        // Wrongly sized images score zero.
      }
    }
    rep.scores[ci] = static_cast<double>(pass) / static_cast<double>(n_per_category);
    rep.overall += rep.scores[ci];
  }
  rep.overall /= static_cast<double>(kGenevalCategories.size());
  return rep;
}

GenevalReport mini_geneval(const backbones::ModelSet& model, std::size_t n_per_category, std::uint64_t seed,
                           std::size_t sampler_steps) {
  flowsampler::SamplerConfig sc;
  sc.steps = sampler_steps;
  auto gen = [&](const std::vector<std::string>& captions, const std::vector<std::uint64_t>& seeds) {
    std::vector<backbones::Image> out;
    constexpr std::size_t kChunk = 32;
    for (std::size_t at = 0; at < captions.size(); at += kChunk) {
      const std::size_t end = std::min(captions.size(), at + kChunk);
      std::vector<std::vector<std::size_t>> prompts;
      for (std::size_t i = at; i < end; ++i) prompts.push_back(prompt_tokens(captions[i]));
      std::vector<std::uint64_t> s(seeds.begin() + at, seeds.begin() + end);
      for (auto& img : flowsampler::generate_batch(prompts, model, sc, s)) out.push_back(std::move(img));
    }
    return out;
  };
  return mini_geneval(gen, n_per_category, seed);
}

double understanding_accuracy(const AnswerFn& answer, const std::vector<Sample>& records) {
  if (records.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& r : records) hit += answer(r.image, r.qa.question) == r.qa.answer;
  return static_cast<double>(hit) / static_cast<double>(records.size());
}

std::string answer_question(const backbones::ModelSet& model, const backbones::Image& image,
                            const std::string& question) {
  const Tensor latent = model.codec.encode(image);
  const auto ids = backbones::greedy_decode(model.vlm, latent, question_prefix(question), Vocabulary::kEos, 16);
  const auto& vocab = Vocabulary::standard();
  std::string out;
  for (std::size_t id : ids) {
    if (!out.empty()) out += ' ';
    out += id < vocab.size() ? vocab.word(id) : vocab.word(Vocabulary::kUnk);
  }
  return out;
}

double understanding_accuracy(const backbones::ModelSet& model, const std::vector<Sample>& records) {
  return understanding_accuracy(
      [&](const backbones::Image& img, const std::string& q) { return answer_question(model, img, q); }, records);
}

}  // namespace mobo::datagen
