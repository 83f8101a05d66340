#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "rsu/error.hpp"
#include "rsu/taxonomy.hpp"
#include "rsu/text.hpp"
#include "support.hpp"

using namespace rsu;
using rsu::test::default_taxonomy;

namespace {

Taxonomy load_text(const std::string& text) {
  std::istringstream in(text);
  return Taxonomy::load(in, "inline");
}

std::vector<std::pair<std::string, int>> summary(const std::vector<KeywordCount>& counts) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& c : counts) out.emplace_back(c.entry->label, c.occurrences);
  return out;
}

}  // namespace

TEST_CASE("default taxonomy has 23/15/47 entries") {
  const auto c = default_taxonomy()->counts();
  CHECK(c.environment == 23);
  CHECK(c.agent == 15);
  CHECK(c.motion == 47);
  CHECK(default_taxonomy()->size() == 85);
}

TEST_CASE("default taxonomy labels and aliases are unique and normalized") {
  std::set<std::string> seen;
  for (const auto& e : default_taxonomy()->entries()) {
    CHECK(e.label == normalize_phrase(e.label));
    CHECK(seen.insert(e.label).second);
    for (const auto& a : e.aliases) CHECK(seen.insert(a).second);
    const auto words = tokenize(e.label).size();
    CHECK(words >= 1);
    CHECK(words <= 4);
  }
}

TEST_CASE("load errors") {
  SUBCASE("empty document") {
    try {
      load_text("# only a comment\n\n");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("no entries") != std::string::npos);
    }
  }
  SUBCASE("duplicate phrase across categories") {
    try {
      load_text("environment\tfog\nagent\tfog\n");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::duplicate);
      CHECK(std::string(e.what()).find("fog") != std::string::npos);
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }
  SUBCASE("duplicate via alias") {
    CHECK_THROWS_AS(load_text("agent\tvehicle\tcar\nagent\tcar\n"), Error);
  }
  SUBCASE("unknown category") {
    try {
      load_text("weather\tfog\n");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("weather") != std::string::npos);
    }
  }
  SUBCASE("empty label") { CHECK_THROWS_AS(load_text("agent\t \n"), Error); }
  SUBCASE("label longer than four words") {
    CHECK_THROWS_AS(load_text("motion\ta b c d e\n"), Error);
  }
  SUBCASE("missing label column") { CHECK_THROWS_AS(load_text("motion\n"), Error); }
  SUBCASE("missing file") { CHECK_THROWS_AS(Taxonomy::load_file("/nonexistent/taxonomy.tsv"), Error); }
}

TEST_CASE("aliases and comments parse") {
  const auto t = load_text("# c\nagent\tVehicle\tcars, car\nmotion\tstop\tstopped\n");
  REQUIRE(t.size() == 2);
  CHECK(t.entry(0).label == "vehicle");
  CHECK(t.entry(0).aliases == std::vector<std::string>{"cars", "car"});
  CHECK(t.find("CARS") == std::size_t{0});
  CHECK(t.find("stopped") == std::size_t{1});
  CHECK_FALSE(t.find("bus"));
  CHECK(t.indices_in(Category::motion) == std::vector<std::size_t>{1});
}

TEST_CASE("match_keywords examples") {
  const auto& t = *default_taxonomy();
  CHECK(summary(t.match_keywords("a pedestrian crossing in fog")) ==
        std::vector<std::pair<std::string, int>>{{"pedestrian", 1}, {"crossing", 1}, {"fog", 1}});
  CHECK(t.match_keywords("").empty());
  CHECK(summary(t.match_keywords("fog fog fog")) == std::vector<std::pair<std::string, int>>{{"fog", 3}});
}

TEST_CASE("longest match wins and tokens are not reused") {
  const auto t = load_text("motion\tbraking\nmotion\tsudden braking\nenvironment\tred light\nenvironment\tlight rain\n");
  CHECK(summary(t.match_keywords("sudden braking then braking")) ==
        std::vector<std::pair<std::string, int>>{{"sudden braking", 1}, {"braking", 1}});
  // "red light rain": left-to-right takes "red light", leaving "rain" unmatched.
  CHECK(summary(t.match_keywords("red light rain")) == std::vector<std::pair<std::string, int>>{{"red light", 1}});
}

TEST_CASE("match_keywords is case insensitive and spans never overlap") {
  const auto& t = *default_taxonomy();
  std::mt19937 rng(11);
  std::vector<std::string> vocab{"the", "a", "3", "and", "near", "in"};
  for (const auto& e : t.entries()) {
    vocab.push_back(e.label);
    for (const auto& a : e.aliases) vocab.push_back(a);
  }
  for (int iter = 0; iter < 300; ++iter) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) text += vocab[rng() % vocab.size()] + (rng() % 3 == 0 ? ", " : " ");
    std::string upper = text;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    CHECK(summary(t.match_keywords(text)) == summary(t.match_keywords(upper)));

    const auto tokens = tokenize(text);
    const auto matches = t.scan(tokens);
    std::size_t covered = 0, prev_end = 0;
    for (const auto& m : matches) {
      CHECK(m.begin >= prev_end);
      prev_end = m.end;
      covered += m.end - m.begin;
      std::vector<std::string> span(tokens.begin() + m.begin, tokens.begin() + m.end);
      CHECK(t.find(join(span, " ")) == m.entry);
    }
    CHECK(covered <= tokens.size());
  }
}

TEST_CASE("rendered surfaces of two keywords scan back to exactly those keywords") {
  const auto& t = *default_taxonomy();
  const auto es = t.entries();
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (std::size_t j = 0; j < es.size(); ++j) {
      const std::string text = es[i].surface(2) + ", " + es[j].surface(1);
      const auto found = t.scan(tokenize(text));
      REQUIRE(found.size() == 2);
      CHECK(found[0].entry == i);
      CHECK(found[1].entry == j);
    }
  }
}

TEST_CASE("surface uses the regular plural only when listed") {
  const auto& t = *default_taxonomy();
  CHECK(t.entry(*t.find("pedestrian")).surface(3) == "pedestrians");
  CHECK(t.entry(*t.find("pedestrian")).surface(1) == "pedestrian");
  CHECK(t.entry(*t.find("rainy weather")).surface(2) == "rainy weather");
  CHECK(t.entry(*t.find("fog")).surface(2) == "fogs");
}
