// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "mobo/datagen/detector.hpp"
#include "mobo/datagen/evaluate.hpp"
#include "mobo/datagen/manifest.hpp"
#include "mobo/errors.hpp"
#include "mobo/flowsampler/sampler.hpp"

using namespace mobo;
using namespace mobo::datagen;
namespace fs = std::filesystem;

namespace {

std::vector<SceneSpec> all_one_object_scenes() {
  std::vector<SceneSpec> out;
  for (auto s : kShapes)
    for (auto c : kColors)
      for (std::size_t cell = 0; cell < 16; ++cell) out.push_back(SceneSpec{{{s, c, cell}}});
  return out;
}

SceneSpec random_scene(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> cells(16);
  for (std::size_t i = 0; i < 16; ++i) cells[i] = i;
  std::shuffle(cells.begin(), cells.end(), rng);
  cells.resize(n);
  std::sort(cells.begin(), cells.end());
  SceneSpec s;
  for (auto cell : cells) s.objects.push_back({kShapes[rng() % 3], kColors[rng() % 4], cell});
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mobo_test_datagen_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("gen_scene is deterministic and valid") {
  CHECK(gen_scene(42) == gen_scene(42));
  for (std::uint64_t s = 0; s < 1000; ++s) CHECK_NOTHROW(gen_scene(s).validate());
}

TEST_CASE("object count histogram is uniform within 3%") {
  std::array<std::size_t, 4> hist{};
  for (std::uint64_t s = 0; s < 10000; ++s) ++hist[gen_scene(mix_seed(7, s)).objects.size()];
  CHECK(hist[0] == 0);
  for (std::size_t n = 1; n <= 3; ++n) CHECK(std::abs(hist[n] / 10000.0 - 1.0 / 3.0) <= 0.03);
}

TEST_CASE("render examples") {
  SceneSpec one{{{ShapeKind::circle, Color::red, 5}}};
  auto img = render(one);
  // Cell 5 is row 1, col 1; its neighbours are empty.
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x)
      if (y / 4 != 1 || x / 4 != 1)
        for (std::size_t c = 0; c < 3; ++c) CHECK(img.at(y, x, c) == 0.0);
  auto bytes = flowsampler::encode_ppm(img);
  const std::string header = "P6\n16 16\n255\n";
  REQUIRE(bytes.size() == header.size() + 16 * 16 * 3);
  const std::size_t px = header.size() + (5 * 16 + 5) * 3;  // interior of the circle
  CHECK(bytes[px] == 255);
  CHECK(bytes[px + 1] == 0);
  CHECK(bytes[px + 2] == 0);
}

TEST_CASE("render is injective over one-object scenes") {
  auto scenes = all_one_object_scenes();
  REQUIRE(scenes.size() == 192);
  std::set<std::vector<double>> images;
  for (const auto& s : scenes) images.insert(render(s).pixels);
  CHECK(images.size() == 192);
}

TEST_CASE("caption and qa grammar") {
  SceneSpec one{{{ShapeKind::circle, Color::red, 0}}};
  auto cap = caption_of(one);
  CHECK(cap.find("red") != std::string::npos);
  CHECK(cap.find("circle") != std::string::npos);
  for (const auto& w : Vocabulary::standard().encode(cap)) CHECK(w != Vocabulary::kUnk);

  std::set<QaKind> kinds;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto sample = make_sample(s);
    kinds.insert(sample.qa.kind);
    for (const auto& w : Vocabulary::standard().encode(sample.qa.question)) CHECK(w != Vocabulary::kUnk);
    const auto& answers = answer_vocabulary();
    CHECK(std::find(answers.begin(), answers.end(), sample.qa.answer) != answers.end());
    if (sample.qa.question == "how many objects ?") {
      static const char* words[] = {"zero", "one", "two", "three"};
      CHECK(sample.qa.answer == words[sample.spec.objects.size()]);
    }
  }
  CHECK(kinds.size() == 4);
}

TEST_CASE("detector recovers rendered scenes") {
  for (const auto& s : all_one_object_scenes()) CHECK(detect(render(s)) == s);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5000; ++i) {
    auto s = random_scene(2, rng);
    REQUIRE(detect(render(s)) == s);
  }
  for (int i = 0; i < 1000; ++i) {
    auto s = random_scene(3, rng);
    REQUIRE(detect(render(s)) == s);
  }
  CHECK(detect(backbones::Image::blank(16, 16, 3)).objects.empty());
}

TEST_CASE("detector tolerates mild pixel noise") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int i = 0; i < 200; ++i) {
    auto s = random_scene(1 + i % 3, rng);
    auto img = render(s);
    for (double& v : img.pixels) v += noise(rng);
    CHECK(detect(img) == s);
  }
}

TEST_CASE("generated records pass the consistency checker") {
  for (std::uint64_t s = 0; s < 1000; ++s) {
    auto r = make_sample(mix_seed(3, s));
    auto rep = check_consistency(r.image, r.caption, r.qa.question, r.qa.answer);
    INFO(r.caption << " | " << r.qa.question << " -> " << r.qa.answer << " : " << rep.detail);
    REQUIRE(rep.ok);
  }
}

TEST_CASE("consistency checker rejects wrong records") {
  auto r = make_sample(5);
  const std::string wrong = r.qa.answer == "yes" ? "no" : "yes";
  CHECK_FALSE(check_consistency(r.image, r.caption, r.qa.question, wrong).ok);
  SceneSpec other{{{ShapeKind::square, Color::blue, 15}}};
  CHECK_FALSE(check_consistency(render(other), r.caption, r.qa.question, r.qa.answer).ok);
  CHECK_FALSE(check_consistency(r.image, r.caption, "why ?", r.qa.answer).ok);
  CHECK_FALSE(check_consistency(r.image, "a red", r.qa.question, r.qa.answer).ok);
}

TEST_CASE("meta round trip and errors") {
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto spec = gen_scene(s);
    CHECK(decode_meta(encode_meta(spec)) == spec);
  }
  CHECK_THROWS_AS(decode_meta("red:circle"), FormatError);
  CHECK_THROWS_AS(decode_meta("red:hexagon:3"), FormatError);
  CHECK_THROWS_AS(decode_meta("red:circle:3;blue:square:3"), FormatError);
  CHECK_THROWS_AS(decode_meta("red:circle:16"), FormatError);
}

TEST_CASE("manifest round trip") {
  auto dir = temp_dir("roundtrip");
  auto samples = make_corpus({50, 9, Split::any, 1});
  auto path = write_dataset(samples, dir);
  auto loaded = load_manifest(path);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].prompt == samples[i].caption);
    CHECK(loaded[i].question == samples[i].qa.question);
    CHECK(loaded[i].answer == samples[i].qa.answer);
    CHECK(decode_meta(loaded[i].meta) == samples[i].spec);
    CHECK(flowsampler::read_ppm(dir / loaded[i].image) == samples[i].image);
  }
  // Escaped characters survive.
  std::vector<Quadruplet> odd{{"a\tb\\c\nd", loaded[0].image, "q=1?", "x", loaded[0].meta}};
  auto p2 = write_manifest(odd, dir);
  CHECK(load_manifest(p2) == odd);
  fs::remove_all(dir);
}

TEST_CASE("manifest errors") {
  auto dir = temp_dir("errors");
  auto samples = make_corpus({3, 1, Split::any, 1});
  auto path = write_dataset(samples, dir);
  std::string text;
  {
    std::ifstream in(path, std::ios::binary);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  auto write = [&](const std::string& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << s;
  };
  write(text.substr(0, text.size() - 10));
  try {
    load_manifest(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  write(text.substr(0, text.find('\n') + 1) + "prompt=x\tbogus\n");
  try {
    load_manifest(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  write("not a header\n");
  CHECK_THROWS_AS(load_manifest(path), FormatError);
  write(text);
  fs::remove(dir / "images" / "000001.ppm");
  try {
    load_manifest(path);
    FAIL("expected IoError");
  } catch (const FormatError&) {
    FAIL("wrong error type");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("000001.ppm") != std::string::npos);
  }
  CHECK_THROWS_AS(load_manifest(dir / "nope.txt"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("train and eval prompts are disjoint") {
  std::set<std::string> train, eval;
  for (const auto& s : make_corpus({2000, 4, Split::train, 1})) train.insert(s.caption);
  for (const auto& s : make_corpus({300, 4, Split::eval, 1})) eval.insert(s.caption);
  for (const auto& c : eval) CHECK(train.count(c) == 0);
  for (auto cat : kGenevalCategories)
    for (const auto& s : geneval_scenes(cat, 20, 1)) {
      CHECK(is_eval_prompt(caption_of(s)));
      CHECK(train.count(caption_of(s)) == 0);
    }
  for (const auto& s : make_corpus({500, 4, Split::train, 2})) CHECK(s.spec.objects.size() >= 2);
}

TEST_CASE("geneval prompts fit their categories") {
  for (auto cat : kGenevalCategories) {
    for (const auto& s : geneval_scenes(cat, 30, 2)) {
      s.validate();
      const auto& o = s.objects;
      switch (cat) {
        case GenevalCategory::single_obj:
        case GenevalCategory::colors: CHECK(o.size() == 1); break;
        case GenevalCategory::two_obj:
        case GenevalCategory::position: CHECK((o.size() == 2 && o[0].shape != o[1].shape)); break;
        case GenevalCategory::counting:
          CHECK(o.size() >= 2);
          for (const auto& x : o) CHECK((x.shape == o[0].shape && x.color == o[0].color));
          break;
        case GenevalCategory::color_attr:
          CHECK((o.size() == 2 && o[0].shape != o[1].shape && o[0].color != o[1].color));
          break;
      }
    }
  }
}

TEST_CASE("mini_geneval bounds") {
  auto oracle = [](const std::vector<std::string>& captions, const std::vector<std::uint64_t>&) {
    std::vector<backbones::Image> out;
    for (const auto& c : captions) {
      // Parse "a <color> <shape> at rXcY and ..." back into a scene.
      SceneSpec s;
      std::istringstream in(c);
      std::string a, color, shape, at, cell, conj;
      while (in >> a >> color >> shape >> at >> cell) {
        s.objects.push_back({*shape_from_string(shape), *color_from_string(color),
                             static_cast<std::size_t>((cell[1] - '0') * 4 + (cell[3] - '0'))});
        in >> conj;
      }
      out.push_back(render(s));
    }
    return out;
  };
  auto black = [](const std::vector<std::string>& captions, const std::vector<std::uint64_t>&) {
    return std::vector<backbones::Image>(captions.size(), backbones::Image::blank(16, 16, 3));
  };
  auto up = mini_geneval(oracle, 25, 3);
  CHECK(up.overall == 1.0);
  for (double s : up.scores) CHECK(s == 1.0);
  auto low = mini_geneval(black, 25, 3);
  CHECK(low.overall == 0.0);
  auto wrong_size = [](const std::vector<std::string>& captions, const std::vector<std::uint64_t>&) {
    return std::vector<backbones::Image>(captions.size(), backbones::Image::blank(8, 8, 3));
  };
  CHECK(mini_geneval(wrong_size, 5, 3).overall == 0.0);
}

TEST_CASE("understanding_accuracy oracles") {
  auto records = make_corpus({400, 6, Split::eval, 1});
  std::map<std::pair<const void*, std::string>, std::string> gold;
  for (const auto& r : records) gold[{&r.image, r.qa.question}] = r.qa.answer;
  auto echo = [&](const backbones::Image& img, const std::string& q) { return gold.at({&img, q}); };
  CHECK(understanding_accuracy(echo, records) == 1.0);

  // Balanced over every answer class: a constant answer scores 1 / classes.
  std::map<std::string, std::vector<Sample>> by_answer;
  for (std::uint64_t i = 0; by_answer.size() < answer_vocabulary().size() || [&] {
         for (auto& [k, v] : by_answer)
           if (v.size() < 20) return true;
         return false;
       }();
       ++i) {
    auto s = make_sample(mix_seed(99, i));
    auto& bucket = by_answer[s.qa.answer];
    if (bucket.size() < 20) bucket.push_back(std::move(s));
  }
  std::vector<Sample> balanced;
  for (auto& [k, v] : by_answer) balanced.insert(balanced.end(), v.begin(), v.end());
  const double chance = 1.0 / static_cast<double>(answer_vocabulary().size());
  for (const auto& a : answer_vocabulary()) {
    auto constant = [&](const backbones::Image&, const std::string&) { return a; };
    CHECK(understanding_accuracy(constant, balanced) == doctest::Approx(chance).epsilon(1e-12));
  }
  CHECK(understanding_accuracy(echo, {}) == 0.0);
}

TEST_CASE("model evaluators are deterministic and untrained models score low") {
  backbones::ModelConfig cfg;
  auto records = make_corpus({40, 8, Split::eval, 1});
  double total = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto model = backbones::ModelSet::create(cfg, seed);
    const double a1 = understanding_accuracy(model, records);
    const double a2 = understanding_accuracy(model, records);
    CHECK(a1 == a2);
    auto g1 = mini_geneval(model, 8, 5);
    auto g2 = mini_geneval(model, 8, 5);
    CHECK(g1.overall == g2.overall);
    CHECK(g1.overall >= 0.0);
    CHECK(g1.overall <= 1.0);
    total += g1.overall;
  }
  CHECK(total / 3 < 0.2);
}
