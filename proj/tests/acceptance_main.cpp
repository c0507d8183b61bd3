// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances and budgets are fixed here, not tuned per run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "concept_audit/association.hpp"
#include "concept_audit/metrics.hpp"
#include "concept_audit/prompt_spec.hpp"
#include "concept_audit/record_ingest.hpp"
#include "concept_audit/reporter.hpp"
#include "concept_audit/server.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"
#include "support/random_corpus.hpp"

using namespace concept_audit;
using concept_audit::testing::L;
using nlohmann::json;
namespace oracle = concept_audit::testing::oracle;

namespace {

/// Collects the first few failure messages of a criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (messages_.size() < 5) messages_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(17);
    s << what << ": got " << got << ", want " << want << " +/- " << tol;
    expect(std::abs(got - want) <= tol, s.str());
  }
  void exact(double got, double want, const std::string& what) { near(got, want, 0.0, what); }

  bool ok() const { return failures_ == 0; }
  long checks() const { return checks_; }
  std::string summary() const {
    std::string out;
    for (const auto& m : messages_) out += "\n      " + m;
    return out;
  }

 private:
  long checks_ = 0;
  long failures_ = 0;
  std::vector<std::string> messages_;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Check&)> body;
};

// --- F1 ------------------------------------------------------------------
//
// Hand enumeration of the F1 fixture (presence sets after normalization):
//   t1: i1 {man, shoes}   i2 {man, dog}
//   t2: i3 {woman, shoes} i4 {man, shoes}
// P(man) = 3/4, P(shoes) = 3/4, P(woman) = P(dog) = 1/4
// P(man|t1) = 2/2, P(man|t2) = 1/2
// sigma_man = sqrt(((1 - .75)^2 + (.5 - .75)^2) / 2) = .25, CV = .25 / .75 = 1/3
// {man, shoes} in i1 and i4: support 2/4, confidence 0.5 / 0.75 = 2/3,
// lift 0.5 / (0.75 * 0.75) = 8/9

void f1_exactness(Check& c) {
  constexpr double kTol = 1e-12;
  const auto f1 = concept_audit::testing::load_fixture("f1.jsonl");
  const auto freq = concept_frequency(f1);
  c.near(freq.find(L("man"))->p, 0.75, kTol, "P(man)");
  c.near(freq.find(L("shoes"))->p, 0.75, kTol, "P(shoes)");
  c.near(freq.find(L("woman"))->p, 0.25, kTol, "P(woman)");
  c.near(freq.find(L("dog"))->p, 0.25, kTol, "P(dog)");
  c.near(conditional_frequency(f1, "t1").find(L("man"))->p, 1.0, kTol, "P(man|t1)");
  c.near(conditional_frequency(f1, "t2").find(L("man"))->p, 0.5, kTol, "P(man|t2)");
  const auto* man = concept_stability(f1).find(L("man"));
  c.expect(man != nullptr, "man missing from stability table");
  if (man) {
    c.near(man->sigma, 0.25, kTol, "sigma(man)");
    c.near(man->cv, 1.0 / 3.0, kTol, "CV(man)");
  }
  const auto* pair = cooccurrence(f1).find(L("man"), L("shoes"));
  c.expect(pair != nullptr, "{man, shoes} missing");
  if (pair) {
    c.near(pair->support, 0.5, kTol, "support{man,shoes}");
    c.near(pair->confidence_ab, 2.0 / 3.0, kTol, "confidence(man->shoes)");
    c.near(pair->lift, 8.0 / 9.0, kTol, "lift{man,shoes}");
  }
}

// --- brute force -----------------------------------------------------------

void brute_force(Check& c) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto corpus = concept_audit::testing::random_corpus(
        seed, {.max_prompts = 10, .max_images = 100, .max_concepts = 20});
    const auto naive = oracle::flatten(corpus);
    const std::string tag = "seed " + std::to_string(seed) + ": ";

    const auto freq = concept_frequency(corpus);
    c.expect(freq.rows.size() == naive.vocabulary.size(), tag + "vocabulary size");
    for (const auto& row : freq.rows) {
      c.expect(row.count == oracle::count(naive, row.label.str()), tag + "count " + row.label.str());
      c.exact(row.p, oracle::marginal(naive, row.label.str()), tag + "P " + row.label.str());
    }
    for (const auto& slice : conditional_table(corpus)) {
      for (const auto& v : naive.vocabulary) {
        const auto ref = oracle::conditional(naive, slice.prompt_id, v);
        const auto* row = slice.find(ConceptLabel::normalize(v));
        c.exact(row ? row->p : 0.0, ref.p, tag + "P(" + v + "|" + slice.prompt_id + ")");
      }
    }
    const auto stab = concept_stability(corpus, 0.0);
    c.expect(stab.rows.size() == naive.vocabulary.size(), tag + "stability rows");
    for (const auto& row : stab.rows) {
      const auto ref = oracle::stability(naive, row.label.str());
      c.exact(row.sigma, ref.sigma, tag + "sigma " + row.label.str());
      c.exact(row.cv, ref.cv, tag + "CV " + row.label.str());
    }
    const auto cooc = cooccurrence(corpus);
    const std::size_t v = naive.vocabulary.size();
    c.expect(cooc.rows.size() == v * (v - 1) / 2, tag + "pair count");
    for (const auto& row : cooc.rows) {
      const auto ref = oracle::pair(naive, row.a.str(), row.b.str());
      c.expect(row.joint_count == ref.joint, tag + "joint " + row.a.str() + "," + row.b.str());
      c.exact(row.support, ref.support, tag + "support");
      c.exact(row.confidence_ab, ref.confidence_ab, tag + "confidence a->b");
      c.exact(row.confidence_ba, ref.confidence_ba, tag + "confidence b->a");
      c.exact(row.lift, ref.lift, tag + "lift");
    }
  }
}

// --- metric laws -----------------------------------------------------------

void metric_laws(Check& c) {
  constexpr double kTol = 1e-12;
  long cases = 0;
  for (std::uint64_t seed = 1000; seed < 2000; ++seed) {
    const bool equal_k = seed % 2 == 0;
    const auto corpus = concept_audit::testing::random_corpus(
        seed, {.max_prompts = 8, .max_images = 60, .max_concepts = 10, .equal_k = equal_k});
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    const auto freq = concept_frequency(corpus);
    const auto slices = conditional_table(corpus);
    const auto cooc = cooccurrence(corpus);

    for (const auto& row : freq.rows) {
      c.expect(row.p >= 0.0 && row.p <= 1.0, tag + "P out of [0,1]");
    }
    for (const auto& row : cooc.rows) {
      const double pa = freq.find(row.a)->p, pb = freq.find(row.b)->p;
      c.expect(row.support <= std::min(pa, pb), tag + "joint exceeds a marginal");
      c.near(row.confidence_ab * pa, row.support, kTol, tag + "conf(a->b) P(a)");
      c.near(row.confidence_ba * pb, row.support, kTol, tag + "conf(b->a) P(b)");
    }
    // Lift computed from either side of the rule must agree.
    for (const auto& label : corpus.concepts()) {
      for (const auto& partner : top_cooccurring(corpus, label, corpus.concepts().size(), RuleMetric::Lift)) {
        const auto back = top_cooccurring(corpus, partner.label, corpus.concepts().size(), RuleMetric::Lift);
        const auto it = std::find_if(back.begin(), back.end(), [&](const PartnerRow& r) { return r.label == label; });
        c.expect(it != back.end() && it->lift == partner.lift, tag + "lift symmetry");
      }
    }
    // CV == 0 exactly when the conditionals are constant across prompts.
    for (const auto& row : concept_stability(corpus, 0.0).rows) {
      std::vector<double> conds;
      for (const auto& s : slices) {
        const auto* r = s.find(row.label);
        conds.push_back(r ? r->p : 0.0);
      }
      const bool constant = std::all_of(conds.begin(), conds.end(), [&](double x) { return x == conds.front(); });
      c.expect((row.cv == 0.0) == constant, tag + "CV==0 <=> constant conditionals for " + row.label.str());
    }
    if (equal_k) {
      for (const auto& row : freq.rows) {
        double mean = 0.0;
        for (const auto& s : slices) {
          const auto* r = s.find(row.label);
          mean += r ? r->p : 0.0;
        }
        mean /= static_cast<double>(slices.size());
        c.near(row.p, mean, kTol, tag + "equal-K marginal vs mean conditional");
      }
    }
    std::size_t previous = cooc.rows.size();
    for (double s : {0.02, 0.1, 0.25, 0.5}) {
      const auto filtered = cooccurrence(corpus, s);
      c.expect(filtered.rows.size() <= previous, tag + "min_support not monotone");
      for (const auto& r : filtered.rows) c.expect(r.support >= s, tag + "row below min_support");
      previous = filtered.rows.size();
    }
    ++cases;
  }
  c.expect(cases >= 1000, "fewer than 1000 cases");
}

// --- subsample CI ------------------------------------------------------------

AuditCorpus calibration_corpus(std::uint64_t seed) {
  constexpr int kImages = 10000;
  constexpr int kHits = 3000;  // true P = 0.30
  std::vector<int> order(kImages);
  for (int i = 0; i < kImages; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> hit(kImages, false);
  for (int i = 0; i < kHits; ++i) hit[order[i]] = true;

  const auto box = BoundingBox::full_image();
  std::vector<PromptRecord> prompts{{"t", "calibration", 1.0, Provenance::Template}};
  std::vector<ImageRecord> images;
  images.reserve(kImages);
  for (int i = 0; i < kImages; ++i) {
    ImageRecord img{"img" + std::to_string(100000 + i), "t", i, {}, {}, "d"};
    img.detections.push_back(Detection::make(L(hit[i] ? "target" : "other"), box));
    images.push_back(std::move(img));
  }
  return AuditCorpus("calibration", RunMetadata{"g", "d", kImages, "", ""}, std::move(prompts),
                     std::move(images));
}

void ci_calibration(Check& c) {
  constexpr double kTruth = 0.30;
  constexpr double kPointTol = 0.02;
  constexpr int kSeeds = 100;
  constexpr int kRequiredCover = 95;
  int covered = 0;
  int point_ok = 0;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto corpus = calibration_corpus(seed);
    const auto est = subsample_ci(corpus, L("target"), 10, 1000, seed);
    covered += (est.lo <= kTruth && kTruth <= est.hi) ? 1 : 0;
    point_ok += std::abs(est.point - kTruth) <= kPointTol ? 1 : 0;
  }
  c.expect(covered >= kRequiredCover, "interval covered 0.30 for " + std::to_string(covered) + "/100 seeds");
  c.expect(point_ok >= kRequiredCover, "point within 0.02 for " + std::to_string(point_ok) + "/100 seeds");
}

// --- prompt grammar ------------------------------------------------------------

void prompt_grammar(Check& c) {
  const auto spec = load_prompt_spec(concept_audit::testing::fixture("grid.spec.json"));
  const auto prompts = expand_distribution(spec);
  const std::vector<std::string> expected = {
      "A photo of a young person jogging",         "A photo of a young person sprinting",
      "A photo of a young person running",         "A photo of a middle-aged person jogging",
      "A photo of a middle-aged person sprinting", "A photo of a middle-aged person running",
      "A photo of a old person jogging",           "A photo of a old person sprinting",
      "A photo of a old person running"};
  c.expect(prompts.size() == 9, "grid expanded to " + std::to_string(prompts.size()) + " prompts");
  for (std::size_t i = 0; i < std::min(prompts.size(), expected.size()); ++i) {
    c.expect(prompts[i].text == expected[i], "grid prompt " + std::to_string(i) + ": " + prompts[i].text);
  }

  auto error_of = [](const std::string& raw) {
    try {
      parse_template(raw);
    } catch (const AuditError& e) {
      return e.code();
    }
    return ErrorCode::IngestFailed;
  };
  c.expect(error_of("A [age person") == ErrorCode::UnclosedPlaceholder, "unclosed placeholder");
  c.expect(error_of("A [] person") == ErrorCode::EmptyPlaceholderName, "empty placeholder name");

  std::mt19937_64 rng(500);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  const std::string literal_chars = "abcXYZ ,.-]'";
  const std::string name_chars = "abcdefghijklmnopqrstuvwxyz0123456789_";
  for (int t = 0; t < 500; ++t) {
    std::string source, identity, rendered;
    std::map<std::string, std::string> binding;
    for (int tokens = pick(8); tokens >= 0; --tokens) {
      switch (pick(3)) {
        case 0: {
          const int len = 1 + pick(6);
          for (int i = 0; i < len; ++i) {
            const char ch = literal_chars[pick(static_cast<int>(literal_chars.size()))];
            source += ch;
            identity += ch;
            rendered += ch;
          }
          break;
        }
        case 1:
          source += "[[";
          identity += "[";
          rendered += "[";
          break;
        default: {
          std::string name;
          for (int i = 1 + pick(5); i > 0; --i) name += name_chars[pick(static_cast<int>(name_chars.size()))];
          auto [it, inserted] = binding.emplace(name, "v" + std::to_string(pick(100)));
          source += "[" + name + "]";
          identity += "[" + name + "]";
          rendered += it->second;
          break;
        }
      }
    }
    try {
      const auto tmpl = parse_template(source);
      c.expect(tmpl.render_identity() == identity, "render identity of '" + source + "'");
      c.expect(tmpl.to_source() == source, "source round-trip of '" + source + "'");
      c.expect(tmpl.render(binding) == rendered, "render of '" + source + "'");
      c.expect(tmpl.literals.size() == tmpl.slots.size() + 1, "segment alternation of '" + source + "'");
      const auto again = parse_template(tmpl.to_source());
      c.expect(again.literals == tmpl.literals && again.slots == tmpl.slots, "reparse of '" + source + "'");
    } catch (const AuditError& e) {
      c.expect(false, "'" + source + "' rejected: " + e.what());
    }
  }
}

// --- ingest and persistence --------------------------------------------------------

void ingest_persistence(Check& c) {
  const auto f1 = concept_audit::testing::load_fixture("f1.jsonl");
  {
    std::istringstream in(serialize_corpus(f1));
    c.expect(parse_records(in).corpus == f1, "f1 persistence round-trip");
  }
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto corpus = concept_audit::testing::random_corpus(seed, {.random_weights = seed % 3 == 0});
    std::istringstream in(serialize_corpus(corpus));
    const auto back = parse_records(in).corpus;
    c.expect(back == corpus, "random corpus round-trip, seed " + std::to_string(seed));
    c.expect(serialize_corpus(back) == serialize_corpus(corpus), "byte-stable serialization");
  }

  try {
    parse_record_files({concept_audit::testing::fixture("f1_corrupted.jsonl")});
    c.expect(false, "strict ingest accepted the corrupted fixture");
  } catch (const IngestFailure& e) {
    c.expect(e.records() + e.diagnostics().size() == e.body_lines(),
             "records + errors != body lines (" + std::to_string(e.records()) + " + " +
                 std::to_string(e.diagnostics().size()) + " vs " + std::to_string(e.body_lines()) + ")");
    c.expect(e.diagnostics().size() == 7 && e.body_lines() == 12, "corrupted fixture diagnostics");
  }

  // Corrupt every body line of f1 in turn; accounting must hold each time.
  const std::string text = serialize_corpus(f1);
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  for (std::size_t bad = 1; bad < lines.size(); ++bad) {
    std::string mutated;
    for (std::size_t i = 0; i < lines.size(); ++i) mutated += (i == bad ? "{broken" : lines[i]) + "\n";
    std::istringstream in(mutated);
    try {
      parse_records(in);
      c.expect(false, "strict ingest accepted a broken line");
    } catch (const IngestFailure& e) {
      c.expect(e.records() + e.diagnostics().size() == e.body_lines(), "accounting with broken line");
      c.expect(e.line() == bad + 1, "first diagnostic line");
    }
  }

  std::istringstream v2(
      R"({"schema_version":2,"run_id":"r","generator_id":"g","detector_id":"d","K_nominal":1})"
      "\n");
  try {
    parse_records(v2, IngestOptions{true});
    c.expect(false, "schema_version 2 accepted");
  } catch (const AuditError& e) {
    c.expect(e.code() == ErrorCode::VersionMismatch, "schema version rejection code");
  }
}

// --- API / CLI equivalence ------------------------------------------------------------

json cli_json(const std::vector<std::string>& args, Check& c, std::string* raw = nullptr) {
  std::istringstream in;
  std::ostringstream out, err;
  const int code = cli::run(args, in, out, err);
  c.expect(code == 0, "cli exit " + std::to_string(code) + ": " + err.str());
  if (raw) *raw = out.str();
  return code == 0 ? json::parse(out.str()) : json::object();
}

void api_cli_equivalence(Check& c) {
  const std::string f1_path = concept_audit::testing::fixture("f1.jsonl").string();
  const std::string w_path = concept_audit::testing::fixture("watchlist_fixture.jsonl").string();
  std::string first, second;
  const json report = cli_json({"audit", "--corpus", f1_path, "--seed", "7", "--tau", "0"}, c, &first);
  cli_json({"audit", "--corpus", f1_path, "--seed", "7", "--tau", "0"}, c, &second);
  c.expect(!first.empty() && first == second, "report bytes differ across runs");

  auto f1 = std::make_shared<const AuditCorpus>(concept_audit::testing::load_fixture("f1.jsonl"));
  auto w = std::make_shared<const AuditCorpus>(concept_audit::testing::load_fixture("watchlist_fixture.jsonl"));
  AuditService svc({f1, w}, {});
  auto get = [&](const std::string& path, const QueryParams& q) {
    const auto r = svc.handle(path, q);
    c.expect(r.status == 200, path + " -> " + std::to_string(r.status));
    return json::parse(r.body);
  };

  std::map<std::string, json> freq_by_label, stab_by_label, partners_by_label;
  for (const auto& row : report["frequency"]["concepts"]) freq_by_label[row["label"]] = row;
  for (const auto& row : report["stability"]["concepts"]) stab_by_label[row["label"]] = row;
  for (const auto& row : report["cooccurrence"]) partners_by_label[row["concept"]] = row["partners"];

  const json listing = get("/runs/f1/concepts", {{"tau", "0"}});
  c.expect(listing["total"] == stab_by_label.size(), "concept listing size");
  for (const auto& row : listing["rows"]) {
    const std::string label = row["label"];
    for (const char* key : {"p", "sigma", "cv", "classification"}) {
      c.expect(row[key] == stab_by_label[label][key], "/concepts " + label + " " + key);
    }
    c.expect(row["count"] == freq_by_label[label]["count"], "/concepts " + label + " count");

    const json detail = get("/runs/f1/concepts/" + label, {{"tau", "0"}});
    c.expect(detail["frequency"]["p"] == freq_by_label[label]["p"], "/concepts/" + label + " p");
    c.expect(detail["stability"]["cv"] == stab_by_label[label]["cv"], "/concepts/" + label + " cv");
    if (partners_by_label.contains(label)) {
      c.expect(detail["cooccurrence"]["partners"] == partners_by_label[label], "/concepts/" + label + " partners");
      const json partners = get("/runs/f1/cooccurrence", {{"c", label}});
      c.expect(partners["partners"] == partners_by_label[label], "/cooccurrence " + label);
    }

    const json cooc = cli_json({"cooc", "--corpus", f1_path, "--concept", label, "--k", "20", "--metric", "lift"}, c);
    const json api = get("/runs/f1/cooccurrence", {{"c", label}, {"k", "20"}, {"metric", "lift"}});
    c.expect(cooc["partners"] == api["partners"], "cooc CLI vs API for " + label);
  }

  const json diff_cli = cli_json({"diff", "--a", f1_path, "--b", w_path}, c);
  const json diff_api = get("/compare", {{"a", "f1"}, {"b", "watch"}});
  c.expect(diff_cli["rows"] == diff_api["rows"], "diff rows CLI vs API");
  c.expect(diff_cli["exclusive_a"] == diff_api["exclusive_a"], "diff exclusives CLI vs API");
}

// --- watchlist ---------------------------------------------------------------------

void watchlist_semantics(Check& c) {
  const auto corpus = concept_audit::testing::load_fixture("watchlist_fixture.jsonl");
  const auto findings = watchlist_scan(corpus, {L("naked")});
  c.expect(findings.size() == 1, "one finding");
  if (findings.empty()) return;
  const auto& f = findings.front();
  c.expect(f.index.prompt_hits.size() == 2, "naked appears under two prompts");
  for (std::size_t i = 0; i < f.index.prompt_hits.size(); ++i) {
    const auto& id = f.index.prompt_hits[i].prompt_id;
    if (id == "w1") c.expect(!f.explicit_mention[i], "benign prompt w1 must be flagged implicit");
    if (id == "w2") c.expect(f.explicit_mention[i], "prompt w2 names the concept");
  }
  c.expect(f.implicit_prompts == 1, "implicit prompt count");

  const json flags = flags_json(corpus, findings);
  c.expect(flags[0]["implicit_prompts"] == 1, "serialized implicit count");
  for (const auto& hit : flags[0]["prompt_hits"]) {
    if (hit["prompt_id"] == "w1") c.expect(hit["explicit"] == false, "serialized w1 flagged implicit");
  }
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"F1 fixture exactness (tol 1e-12)", 1.0, f1_exactness},
      {"brute-force oracle equivalence (200 corpora)", 30.0, brute_force},
      {"metric laws (1000 cases)", 60.0, metric_laws},
      {"subsample CI calibration (P=0.30, 10x1000, >=95/100 seeds)", 10.0, ci_calibration},
      {"prompt grammar (grid, errors, 500 round-trips)", 5.0, prompt_grammar},
      {"ingest and persistence (round-trip, accounting, version)", 10.0, ingest_persistence},
      {"API/CLI equivalence and report determinism", 10.0, api_cli_equivalence},
      {"watchlist implicit flag", 1.0, watchlist_semantics},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("unexpected exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.expect(seconds < criterion.budget_seconds, "runtime over budget");
    const bool ok = check.ok();
    failed += ok ? 0 : 1;
    std::printf("%s  %-62s %7ld checks  %6.3fs / %.0fs%s\n", ok ? "PASS" : "FAIL", criterion.name.c_str(),
                check.checks(), seconds, criterion.budget_seconds, ok ? "" : check.summary().c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
