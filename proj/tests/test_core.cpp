#include <doctest.h>

#include <filesystem>

#include "genret/error.hpp"
#include "genret/io.hpp"
#include "genret/random.hpp"
#include "genret/types.hpp"
#include "support.hpp"

using namespace genret;

namespace {

RankingInstance small_instance() {
  RankingInstance inst;
  inst.image_id = "img1";
  inst.anchor = "cat";
  inst.candidates = {"orange", "blue", "furry"};
  inst.positives = {0, 2};
  return inst;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("normalize and split words") {
  CHECK(normalize_word("  Traffic   LIGHT ") == "traffic light");
  CHECK(normalize_word("") == "");
  CHECK(split_words(" a  b\tc ") == TokenSeq{"a", "b", "c"});
  CHECK(split_words("   ").empty());
  CHECK(join_words({"a", "b"}) == "a b");
}

TEST_CASE("template rendering") {
  auto t = Template::parse("{A} {O} is {A}");
  CHECK(t.render("orange", "cat") == TokenSeq{"orange", "cat", "is", "orange"});
  CHECK(t.name() == "{A} {O} is {A}");
  CHECK(Template::parse(t.format()) == t);

  // multi-word values are split into tokens
  CHECK(Template::parse("{O} is {A}").render("dark blue", "traffic light") ==
        TokenSeq{"traffic", "light", "is", "dark", "blue"});

  // glued slots are fine
  CHECK(Template::parse("{A}{O}").render("red", "car") == TokenSeq{"red", "car"});

  auto named = Template::parse("{A}", Slot::Attribute, "attr-only");
  CHECK(named.name() == "attr-only");
  CHECK(named.format() == "{A}");
}

TEST_CASE("template errors") {
  CHECK(kind_of([] { Template::parse(""); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("a photo"); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("{A"); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("the{A}"); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("{X}"); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("{A}", Slot::Object); }) == ErrorKind::TemplateSyntax);
  CHECK(kind_of([] { Template::parse("{O} is {A}").render(std::nullopt, "cat"); }) == ErrorKind::Render);
  CHECK(kind_of([] { Template::parse("{O} is {A}").render("  ", "cat"); }) == ErrorKind::Render);
}

TEST_CASE("canonical templates parse") {
  for (auto spec : kCanonicalTemplates) {
    auto t = Template::parse(spec, Slot::Attribute);
    CHECK(t.format() == spec);
  }
}

TEST_CASE("instance validation") {
  auto inst = small_instance();
  CHECK_NOTHROW(inst.validate());

  auto dup = inst;
  dup.candidates[1] = "orange";
  CHECK(kind_of([&] { dup.validate(); }) == ErrorKind::Schema);

  auto none = inst;
  none.positives.clear();
  CHECK(kind_of([&] { none.validate(); }) == ErrorKind::Schema);

  auto range = inst;
  range.positives = {5};
  CHECK(kind_of([&] { range.validate(); }) == ErrorKind::Schema);

  auto overlap = inst;
  overlap.negatives_explicit = std::vector<std::size_t>{0};
  CHECK(kind_of([&] { overlap.validate(); }) == ErrorKind::Schema);
}

TEST_CASE("labels") {
  auto inst = small_instance();
  CHECK(inst.label(0) == Label::Positive);
  CHECK(inst.label(1) == Label::Negative);
  CHECK(inst.label(1, false) == Label::Unlabeled);

  inst.candidates.push_back("small");
  inst.negatives_explicit = std::vector<std::size_t>{1};
  CHECK(inst.label(1) == Label::Negative);
  CHECK(inst.label(3) == Label::Unlabeled);
}

TEST_CASE("ranking order is stable") {
  CHECK(ranking_order({2.0, 1.0, 2.0, 0.5}) == std::vector<std::size_t>{3, 1, 0, 2});
  ScoredInstance s;
  s.instance = small_instance();
  s.scores = {1.0, 1.0, 0.0};
  CHECK(s.ranks() == std::vector<std::size_t>{2, 3, 1});

  s.scores = {1.0, std::nan("")};
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::Schema);
}

TEST_CASE("instance json round trip") {
  auto inst = small_instance();
  inst.region = Box{1, 2, 3, 4};
  inst.negatives_explicit = std::vector<std::size_t>{1};
  Json j = inst;
  CHECK(j["anchor_kind"] == "object");
  auto back = j.get<RankingInstance>();
  CHECK(back == inst);

  j["candidates"][0] = " Orange ";
  CHECK(j.get<RankingInstance>().candidates[0] == "orange");

  j["positives"] = Json::array();
  CHECK(kind_of([&] { (void)j.get<RankingInstance>(); }) == ErrorKind::Schema);
  CHECK(kind_of([] { (void)Json{{"image_id", "x"}}.get<RankingInstance>(); }) == ErrorKind::Schema);
}

TEST_CASE("jsonl files") {
  const auto dir = std::filesystem::temp_directory_path() / "genret_core_test";
  std::filesystem::create_directories(dir);
  std::vector<RankingInstance> xs{small_instance(), small_instance()};
  xs[1].image_id = "img2";
  io::write_instances(dir / "a.jsonl", xs);
  CHECK(io::read_instances(dir / "a.jsonl") == xs);
  CHECK(kind_of([&] { io::read_instances(dir / "missing.jsonl"); }) == ErrorKind::Io);

  io::write_text_atomic(dir / "bad.jsonl", "{\"image_id\": 1\n");
  CHECK(kind_of([&] { io::read_instances(dir / "bad.jsonl"); }) == ErrorKind::Schema);
  std::filesystem::remove_all(dir);
}

TEST_CASE("numeric image ids are accepted") {
  CHECK(id_from_json(Json(42)) == "42");
  CHECK(id_from_json(Json("x7")) == "x7");
}

TEST_CASE("rng is deterministic and bounded") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.below(7) == b.below(7));
  Rng c(5);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 5000; ++i) {
    auto v = c.below(5);
    REQUIRE(v < 5);
    ++counts[v];
  }
  for (int n : counts) CHECK(n > 800);
  std::vector<int> v{1, 2, 3, 4, 5, 6};
  Rng d(9);
  d.shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  // reference FNV-1a value of "a"
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("error messages carry the category") {
  Error e(ErrorKind::Lookup, "no such image");
  CHECK(std::string(e.what()) == "lookup error: no such image");
  TransportError t("bad", "<html>", 502);
  CHECK(t.kind() == ErrorKind::Transport);
  CHECK(t.body() == "<html>");
  CHECK(t.status() == 502);
}

}
