#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rsu/backend.hpp"
#include "rsu/error.hpp"
#include "rsu/evaluation.hpp"
#include "support.hpp"

using namespace rsu;
using namespace rsu::test;

namespace {

const std::vector<AnnotationItem> kPaperItems{agent("pedestrian", 3), agent("cyclist", 1), agent("vehicle", 1),
                                              env("rainy weather")};

std::vector<AnnotationItem> without_counts(std::vector<AnnotationItem> items) {
  for (auto& i : items) i.count.reset();
  return items;
}

}  // namespace

TEST_CASE("worked narration example scores 0.75") {
  const auto s = score_narration("3 pedestrians, 1 vehicle in rainy weather", kPaperItems, *default_taxonomy());
  CHECK(s.matched == 3);
  CHECK(s.total == 4);
  CHECK(s.value == 0.75);
  REQUIRE(s.missed.size() == 1);
  CHECK(s.missed[0].label == "cyclist");
  CHECK(s.spurious.empty());
}

TEST_CASE("rendered annotation scores 1.0") {
  const auto text = render_items(kPaperItems, *default_taxonomy());
  CHECK(score_narration(text, kPaperItems, *default_taxonomy()).value == 1.0);
}

TEST_CASE("count mismatch fails the counted item") {
  const std::vector<AnnotationItem> items{agent("pedestrian", 3), env("fog"), agent("vehicle", 1)};
  const auto s = score_narration("2 pedestrians, fog", items, *default_taxonomy());
  CHECK(s.matched == 1);
  CHECK(s.value == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("count must sit right before the phrase") {
  const std::vector<AnnotationItem> items{agent("pedestrian", 3)};
  CHECK(score_narration("3 tall pedestrians", items, *default_taxonomy()).matched == 0);
  CHECK(score_narration("pedestrians 3", items, *default_taxonomy()).matched == 0);
  CHECK(score_narration("we saw 3 pedestrians", items, *default_taxonomy()).matched == 1);
}

TEST_CASE("one mention satisfies one item") {
  const std::vector<AnnotationItem> items{env("fog"), env("fog")};
  CHECK(score_narration("fog", items, *default_taxonomy()).matched == 1);
  CHECK(score_narration("fog and fog", items, *default_taxonomy()).matched == 2);
}

TEST_CASE("spurious keywords are reported but never penalized") {
  const auto base = score_narration("3 pedestrians, 1 vehicle in rainy weather", kPaperItems, *default_taxonomy());
  const auto noisy =
      score_narration("3 pedestrians, 1 vehicle in rainy weather, fog, a bus turning", kPaperItems, *default_taxonomy());
  CHECK(noisy.matched == base.matched);
  CHECK(noisy.spurious.size() == 3);
}

TEST_CASE("frequencies count every mention") {
  const auto s = score_narration("fog, fog and more fog", {std::vector<AnnotationItem>{env("fog")}}, *default_taxonomy());
  REQUIRE(s.frequencies.size() == 1);
  CHECK(s.frequencies[0].occurrences == 3);
}

TEST_CASE("empty annotation cannot be scored") {
  try {
    score_narration("fog", {}, *default_taxonomy());
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("nothing to score") != std::string::npos);
  }
}

TEST_CASE("narration score matches the exhaustive pairing oracle") {
  const auto& tax = *default_taxonomy();
  std::mt19937 rng(31);
  const auto es = tax.entries();
  // A small keyword pool makes collisions and repeated labels common.
  std::vector<std::size_t> pool;
  for (const char* l : {"pedestrian", "vehicle", "cyclist", "fog", "rainy weather", "stop", "turning", "low speed"}) {
    pool.push_back(*tax.find(l));
  }
  const std::vector<std::string> filler{"the", "a", "near", "and", "with", "2", "3", "1", "in"};
  for (int iter = 0; iter < 600; ++iter) {
    std::vector<AnnotationItem> items;
    const int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      const auto& e = es[pool[rng() % pool.size()]];
      AnnotationItem it{e.category, e.label, std::nullopt};
      if (e.category == Category::agent && rng() % 2) it.count = 1 + static_cast<int>(rng() % 3);
      items.push_back(it);
    }
    std::string text;
    const int words = static_cast<int>(rng() % 12);
    for (int w = 0; w < words; ++w) {
      if (rng() % 2) {
        const auto& e = es[pool[rng() % pool.size()]];
        text += e.surface(1 + static_cast<int>(rng() % 3)) + " ";
      } else {
        text += filler[rng() % filler.size()] + " ";
      }
    }
    const auto s = score_narration(text, items, tax);
    CHECK_MESSAGE(s.matched == oracle::max_matched(text, items, tax), text);
    CHECK(s.value == doctest::Approx(static_cast<double>(s.matched) / n));
    CHECK(s.value >= 0.0);
    CHECK(s.value <= 1.0);
  }
}

TEST_CASE("causal extraction examples") {
  const auto& tax = *default_taxonomy();
  SUBCASE("because") {
    const auto st = extract_causal_statements("The vehicle stopped because the traffic light turned red", tax);
    REQUIRE(st.size() == 1);
    CHECK(st[0].effects == std::vector<AnnotationItem>{motion("stop")});
    CHECK(st[0].causes == std::vector<AnnotationItem>{env("red light")});
    CHECK(st[0].actors == std::vector<AnnotationItem>{agent("vehicle")});
  }
  SUBCASE("empty") { CHECK(extract_causal_statements("", tax).empty()); }
  SUBCASE("caused by") {
    const auto st = extract_causal_statements("The weather change is caused by the low speed of vehicles", tax);
    REQUIRE(st.size() == 1);
    CHECK(st[0].effects == std::vector<AnnotationItem>{env("weather change")});
    CHECK(st[0].causes == std::vector<AnnotationItem>{motion("low speed")});
    CHECK(is_flawed(st[0]));
  }
  SUBCASE("forward connectives") {
    const auto st = extract_causal_statements("Fog, leading to low speed.", tax);
    REQUIRE(st.size() == 1);
    CHECK(st[0].causes == std::vector<AnnotationItem>{env("fog")});
    CHECK(st[0].effects == std::vector<AnnotationItem>{motion("low speed")});
  }
  SUBCASE("sentences without connective or keywords are skipped") {
    CHECK(extract_causal_statements("Fog everywhere. It happened because of things.", tax).empty());
  }
  SUBCASE("several sentences") {
    const auto st = extract_causal_statements("stop because red light. low speed due to fog!", tax);
    CHECK(st.size() == 2);
  }
}

TEST_CASE("flawed direction rule") {
  CHECK(is_flawed({{motion("low speed")}, {env("weather change")}, {}}));
  CHECK(is_flawed({{motion("speeding")}, {agent("pedestrian")}, {}}));
  CHECK_FALSE(is_flawed({{env("fog")}, {motion("low speed")}, {}}));
  CHECK_FALSE(is_flawed({{motion("speeding")}, {motion("sudden braking")}, {}}));
  CHECK_FALSE(is_flawed({{agent("pedestrian")}, {motion("stop")}, {}}));
}

TEST_CASE("reasoning validation") {
  const std::vector<CausalStatement> annotated{{{env("red light"), agent("pedestrian")}, {motion("stop"), motion("low speed")}, {}}};
  SUBCASE("flawed statement scores 0 regardless of overlap") {
    const std::vector<CausalStatement> out{annotated[0], {{motion("low speed")}, {env("weather change")}, {}}};
    const auto s = validate_reasoning(out, annotated);
    CHECK_FALSE(s.structurally_valid);
    CHECK(s.keyword_value == 1.0);
    CHECK(s.value == 0.0);
    CHECK(s.violations.size() == 1);
  }
  SUBCASE("identity") { CHECK(validate_reasoning(annotated, annotated).value == 1.0); }
  SUBCASE("two of four keywords") {
    const std::vector<CausalStatement> out{{{env("red light")}, {motion("stop")}, {}}};
    const auto s = validate_reasoning(out, annotated);
    CHECK(s.matched == 2);
    CHECK(s.total == 4);
    CHECK(s.value == 0.5);
  }
  SUBCASE("empty annotation") { CHECK_THROWS_AS(validate_reasoning(annotated, {}), Error); }
}

TEST_CASE("any flawed statement in a random list forces zero") {
  std::mt19937 rng(41);
  const std::vector<AnnotationItem> envs{env("fog"), env("red light")}, agents{agent("vehicle"), agent("cyclist")},
      motions{motion("stop"), motion("speeding")};
  auto pick = [&](const std::vector<AnnotationItem>& v) { return v[rng() % v.size()]; };
  const std::vector<CausalStatement> annotated{{{env("fog")}, {motion("stop")}, {}}};
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<CausalStatement> list;
    const int n = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < n; ++i) list.push_back({{rng() % 2 ? pick(envs) : pick(agents)}, {pick(motions)}, {}});
    list.insert(list.begin() + static_cast<long>(rng() % (list.size() + 1)),
                rng() % 2 ? CausalStatement{{pick(motions)}, {pick(envs)}, {}}
                          : CausalStatement{{pick(motions)}, {pick(agents)}, {}});
    CHECK(validate_reasoning(list, annotated).value == 0.0);
  }
}

TEST_CASE("reasoning overlap matches the key-set oracle") {
  std::mt19937 rng(43);
  const auto& tax = *default_taxonomy();
  const auto envs = tax.indices_in(Category::environment), motions = tax.indices_in(Category::motion);
  auto item = [&](const std::vector<std::size_t>& idx) {
    const auto& e = tax.entry(idx[rng() % 5]);
    return AnnotationItem{e.category, e.label, std::nullopt};
  };
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<CausalStatement> a{{{item(envs)}, {item(motions)}, {}}}, b{{{item(envs)}, {item(motions)}, {}}};
    if (rng() % 2) a.push_back({{item(envs)}, {item(motions)}, {}});
    const auto expected = oracle::reasoning_keys(a), produced = oracle::reasoning_keys(b);
    int matched = 0;
    for (const auto& k : expected) matched += produced.count(k) ? 1 : 0;
    const auto s = validate_reasoning(b, a);
    CHECK(s.matched == matched);
    CHECK(s.total == static_cast<int>(expected.size()));
  }
}

TEST_CASE("mock at zero corruption closes the oracle loop on fixtures") {
  const auto& tax = *default_taxonomy();
  for (const auto& seg : fixture_segments()) {
    const auto out = mock_render(seg.annotation, tax, 0.0, 5);
    CHECK(score_narration(out.narration, seg.annotation.items, tax).value == 1.0);
    const auto st = extract_causal_statements(out.reasoning, tax);
    CHECK_MESSAGE(validate_reasoning(st, seg.annotation.reasoning).value == 1.0, out.reasoning);
  }
}

TEST_CASE("aggregate means and percentages") {
  CHECK(format_percent(0.75) == "75.0%");
  CHECK(format_percent(1.0) == "100.0%");
  const auto one = aggregate({{{"mock", true}, {{"s", 0.75, 1.0}}}});
  CHECK(format_percent(one.groups[0].narration) == "75.0%");
  const auto two = aggregate({{{"mock", true}, {{"a", 1.0, 0.0}, {"b", 0.5, 1.0}}}});
  CHECK(format_percent(two.groups[0].narration) == "75.0%");
  CHECK(format_percent(two.groups[0].reasoning) == "50.0%");
  CHECK_THROWS_AS(aggregate({{{"mock", true}, {}}}), Error);
  CHECK_THROWS_AS(aggregate({}), Error);
}

TEST_CASE("accuracy table layout") {
  const auto report = aggregate({{{"mock", true}, {{"a", 1.0, 0.5}}},
                                 {{"mock", false}, {{"a", 0.5, 0.25}}},
                                 {{"remote", true}, {{"a", 0.75, 0.75}}}});
  const std::string golden =
      "Task  PS | mock    remote\n"
      "---------+---------------\n"
      "Nar.  ✓  | 100.0%  75.0%\n"
      "      ✗  | 50.0%   -\n"
      "---------+---------------\n"
      "Rea.  ✓  | 50.0%   75.0%\n"
      "      ✗  | 25.0%   -\n";
  CHECK(report.render_table() == golden);
  const auto j = report.to_json();
  CHECK(j["groups"].size() == 3);
}
