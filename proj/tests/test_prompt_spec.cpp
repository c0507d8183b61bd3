#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "concept_audit/prompt_spec.hpp"
#include "support/fixtures.hpp"

using namespace concept_audit;

namespace {

ErrorCode parse_error(const std::string& raw) {
  try {
    parse_template(raw);
  } catch (const AuditError& e) {
    return e.code();
  }
  return ErrorCode::IngestFailed;
}

PromptDistributionSpec grid(std::vector<std::string> a, std::vector<std::string> b) {
  PromptDistributionSpec spec;
  spec.templates.push_back({parse_template("[a] and [b]"), {{"a", std::move(a)}, {"b", std::move(b)}}});
  return spec;
}

PromptDistributionSpec empirical(std::vector<std::pair<std::string, double>> items) {
  PromptDistributionSpec spec;
  spec.mode = DistributionMode::WeightedEmpirical;
  for (auto& [text, w] : items) spec.empirical.push_back({text, w});
  return spec;
}

}  // namespace

TEST_CASE("parse_template splits literals and placeholders") {
  const auto t = parse_template("A photo of a [age] person [action]");
  CHECK(t.placeholder_names == std::vector<std::string>{"age", "action"});
  CHECK(t.literals == std::vector<std::string>{"A photo of a ", " person ", ""});
  CHECK(t.literals.size() == 3);

  const auto plain = parse_template("hello");
  CHECK(plain.literals == std::vector<std::string>{"hello"});
  CHECK(plain.placeholder_names.empty());
}

TEST_CASE("repeated placeholder names bind jointly") {
  const auto t = parse_template("x [a] y [a]");
  CHECK(t.placeholder_names == std::vector<std::string>{"a"});
  CHECK(t.render({{"a", "Q"}}) == "x Q y Q");
}

TEST_CASE("parse_template escapes and errors") {
  const auto t = parse_template("[[literal] [x]");
  CHECK(t.placeholder_names == std::vector<std::string>{"x"});
  CHECK(t.render_identity() == "[literal] [x]");
  CHECK(t.to_source() == "[[literal] [x]");

  CHECK(parse_error("A [age person") == ErrorCode::UnclosedPlaceholder);
  CHECK(parse_error("A [] person") == ErrorCode::EmptyPlaceholderName);
  CHECK(parse_error("A [Age] person") == ErrorCode::InvalidPlaceholderName);
  CHECK(parse_error("A [a b] person") == ErrorCode::InvalidPlaceholderName);
  CHECK_THROWS_AS(parse_template("x [a]").render({}), AuditError);
}

TEST_CASE("expand_distribution reproduces the age x action grid") {
  const auto spec = load_prompt_spec(concept_audit::testing::fixture("grid.spec.json"));
  const auto prompts = expand_distribution(spec);
  REQUIRE(prompts.size() == 9);
  const std::vector<std::string> expected = {
      "A photo of a young person jogging",       "A photo of a young person sprinting",
      "A photo of a young person running",       "A photo of a middle-aged person jogging",
      "A photo of a middle-aged person sprinting", "A photo of a middle-aged person running",
      "A photo of a old person jogging",         "A photo of a old person sprinting",
      "A photo of a old person running"};
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(prompts[i].text == expected[i]);
    CHECK(prompts[i].weight == 1.0);
    CHECK(prompts[i].provenance == Provenance::Template);
  }
  // ids are reproducible digests
  CHECK(expand_distribution(spec)[4].prompt_id == prompts[4].prompt_id);
  CHECK(prompts[0].prompt_id == prompt_content_id(expected[0], Provenance::Template));
}

TEST_CASE("expand_distribution orders the last placeholder fastest") {
  const auto prompts = expand_distribution(grid({"p", "q"}, {"r", "s"}));
  REQUIRE(prompts.size() == 4);
  CHECK(prompts[0].text == "p and r");
  CHECK(prompts[1].text == "p and s");
  CHECK(prompts[2].text == "q and r");
  CHECK(prompts[3].text == "q and s");
}

TEST_CASE("expand_distribution edge cases") {
  PromptDistributionSpec single;
  single.templates.push_back({parse_template("a fixed prompt"), {}});
  CHECK(expand_distribution(single).size() == 1);

  CHECK_THROWS_AS(expand_distribution(grid({"p"}, {})), AuditError);
  try {
    expand_distribution(grid({"p"}, {}));
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::EmptyValueSet);
  }

  PromptDistributionSpec none;
  try {
    expand_distribution(none);
    FAIL("expected NoPrompts");
  } catch (const AuditError& e) {
    CHECK(e.code() == ErrorCode::NoPrompts);
  }

  // duplicate texts stay distinct records with stable ids
  const auto dup = expand_distribution(grid({"p", "p"}, {"r"}));
  REQUIRE(dup.size() == 2);
  CHECK(dup[0].prompt_id != dup[1].prompt_id);
  CHECK(dup[1].prompt_id == dup[0].prompt_id + "~2");
}

TEST_CASE("cartesian expansion size is the sum of value-set products") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    PromptDistributionSpec spec;
    std::size_t expected = 0;
    const int n_templates = 1 + static_cast<int>(rng() % 3);
    for (int t = 0; t < n_templates; ++t) {
      const int n_names = static_cast<int>(rng() % 4);
      std::string raw = "t" + std::to_string(t);
      TemplateEntry entry;
      std::size_t product = 1;
      for (int n = 0; n < n_names; ++n) {
        const std::string name = "v" + std::to_string(n);
        raw += " [" + name + "]";
        const int size = 1 + static_cast<int>(rng() % 4);
        for (int v = 0; v < size; ++v) entry.values[name].push_back(name + "_" + std::to_string(v));
        product *= static_cast<std::size_t>(size);
      }
      entry.tmpl = parse_template(raw);
      spec.templates.push_back(std::move(entry));
      expected += product;
    }
    CHECK(expand_distribution(spec).size() == expected);
  }
}

TEST_CASE("sample_prompts approximates a uniform grid") {
  const auto spec = load_prompt_spec(concept_audit::testing::fixture("grid.spec.json"));
  const auto draws = sample_prompts(spec, 9000, 42);
  REQUIRE(draws.size() == 9000);
  std::map<std::string, int> counts;
  for (const auto& d : draws) ++counts[d.text];
  CHECK(counts.size() == 9);
  const double tolerance = 9.0 / std::sqrt(9000.0);
  for (const auto& [text, n] : counts) {
    CHECK(std::abs(n / 9000.0 - 1.0 / 9.0) <= tolerance);
  }
  // reproducible
  CHECK(sample_prompts(spec, 50, 42)[17].prompt_id == draws[17].prompt_id);
}

TEST_CASE("sample_prompts single prompt and zero weights") {
  PromptDistributionSpec single;
  single.templates.push_back({parse_template("only one"), {}});
  const auto five = sample_prompts(single, 5, 1);
  REQUIRE(five.size() == 5);
  for (const auto& p : five) CHECK(p.text == "only one");

  const auto spec = empirical({{"first", 1.0}, {"second", 0.0}});
  for (const auto& p : sample_prompts(spec, 2000, 3)) CHECK(p.text == "first");

  CHECK_THROWS_AS(sample_prompts(single, 0, 1), AuditError);
  CHECK_THROWS_AS(sample_prompts(empirical({{"a", 0.0}}), 1, 1), AuditError);
}

TEST_CASE("equal weights sample like uniform (chi-square, p > 0.01)") {
  // Critical value of chi-square with 8 degrees of freedom at p = 0.01.
  constexpr double kCritical = 20.090;
  std::vector<std::pair<std::string, double>> items;
  for (int i = 0; i < 9; ++i) items.emplace_back("prompt " + std::to_string(i), 2.5);
  const auto spec = empirical(items);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto draws = sample_prompts(spec, 4500, seed);
    std::map<std::string, int> counts;
    for (const auto& d : draws) ++counts[d.text];
    double chi2 = 0.0;
    const double expected = 4500.0 / 9.0;
    for (const auto& [text, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
    CHECK(chi2 < kCritical);
  }
}

TEST_CASE("prompt-spec documents parse and validate") {
  const auto spec = load_prompt_spec(concept_audit::testing::fixture("empirical.spec.json"));
  CHECK(spec.mode == DistributionMode::WeightedEmpirical);
  const auto prompts = expand_distribution(spec);
  REQUIRE(prompts.size() == 3);
  CHECK(prompts[0].weight == 3.0);
  CHECK(prompts[2].weight == 0.0);
  CHECK(prompts[0].provenance == Provenance::Empirical);

  CHECK_THROWS_AS(parse_prompt_spec(R"({"mode":"cartesian_uniform","templates":[{"template":"[a]","values":{"a":[]}}]})"),
                  AuditError);
  CHECK_THROWS_AS(parse_prompt_spec(R"({"mode":"bogus"})"), AuditError);
  CHECK_THROWS_AS(parse_prompt_spec(R"({"mode":"weighted_empirical","empirical":[{"text":"a","weight":-1}]})"),
                  AuditError);
  CHECK_THROWS_AS(parse_prompt_spec("not json"), AuditError);

  const auto a = load_prompt_spec(concept_audit::testing::fixture("disability.spec.json"));
  const auto b = load_prompt_spec(concept_audit::testing::fixture("disability_photo.spec.json"));
  CHECK(expand_distribution(a).size() == 6);
  CHECK(expand_distribution(b)[0].text == "A person with a disability, photo");
  CHECK(spec_digest(a) == spec_digest(load_prompt_spec(concept_audit::testing::fixture("disability.spec.json"))));
  CHECK(spec_digest(a) != spec_digest(b));
}
