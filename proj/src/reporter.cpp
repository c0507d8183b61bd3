#include "concept_audit/reporter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace concept_audit {

using nlohmann::json;

namespace {

json box_json(const BoundingBox& b) { return json::array({b.x0(), b.y0(), b.x1(), b.y1()}); }

std::string join_labels(const std::vector<ConceptLabel>& labels) {
  std::string out;
  for (const auto& l : labels) {
    if (!out.empty()) out += ", ";
    out += l.str();
  }
  return out;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out;
}

}  // namespace

void ReportParams::validate() const {
  auto fail = [](const std::string& msg) { throw AuditError(ErrorCode::InvalidParameter, msg); };
  if (!(tau >= 0.0 && tau < 1.0)) fail("tau must be in [0,1)");
  if (!(cv_cutoff > 0.0) || !std::isfinite(cv_cutoff)) fail("cv_cutoff must be > 0");
  if (top_m < 1) fail("top_m must be >= 1");
  if (top_partners < 1) fail("k must be >= 1");
  if (!(min_support >= 0.0 && min_support <= 1.0)) fail("min_support must be in [0,1]");
  if (ci_groups != 0 && ci_groups < 2) fail("ci_groups must be 0 (disabled) or >= 2");
  if (ci_group_size && *ci_group_size < 1) fail("ci_size must be >= 1");
}

std::vector<FrequencyRow> rank_by_frequency(const FrequencyTable& table) {
  std::vector<FrequencyRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), [](const FrequencyRow& a, const FrequencyRow& b) {
    return a.p > b.p;  // rows arrive label-sorted, so ties stay in label order
  });
  return rows;
}

AuditReport build_report(const AuditCorpus& corpus, const ReportParams& params) {
  params.validate();
  AuditReport report;
  report.corpus = &corpus;
  report.params = params;
  report.frequency = concept_frequency(corpus);
  report.stability = concept_stability(corpus, params.tau, params.cv_cutoff);

  report.effective_ci_group_size =
      params.ci_group_size.value_or(default_ci_group_size(corpus.image_count()));
  const bool with_ci = params.ci_groups >= 2 && report.effective_ci_group_size >= 1;
  if (with_ci && report.effective_ci_group_size > static_cast<std::int64_t>(corpus.image_count())) {
    throw AuditError(ErrorCode::NotEnoughImages,
                     "ci_size " + std::to_string(report.effective_ci_group_size) +
                         " exceeds the corpus image count " +
                         std::to_string(corpus.image_count()));
  }

  auto ranked = rank_by_frequency(report.frequency);
  if (ranked.size() > params.top_m) {
    ranked.erase(ranked.begin() + static_cast<std::ptrdiff_t>(params.top_m), ranked.end());
  }
  for (const auto& row : ranked) {
    TopConcept top{row, std::nullopt};
    if (with_ci) {
      top.interval = subsample_ci(corpus, row.label, params.ci_groups,
                                  report.effective_ci_group_size, params.seed);
    }
    report.top_concepts.push_back(std::move(top));
    report.cooccurrence.push_back(
        {row.label, top_cooccurring(corpus, row.label, params.top_partners,
                                    params.partner_metric, params.min_support)});
  }

  if (!params.watchlist.empty()) {
    report.flags = watchlist_scan(corpus, params.watchlist, params.evidence_limit);
  }
  report.prompts = conditional_table(corpus);
  return report;
}

RunDiff compare_runs(const AuditCorpus& a, const AuditCorpus& b, double floor) {
  if (!(floor >= 0.0 && floor <= 1.0)) {
    throw AuditError(ErrorCode::InvalidParameter, "floor must be in [0,1]");
  }
  const FrequencyTable fa = concept_frequency(a);
  const FrequencyTable fb = concept_frequency(b);

  RunDiff diff;
  diff.run_a = a.run_id();
  diff.run_b = b.run_id();
  diff.floor = floor;
  auto ia = fa.rows.begin();
  auto ib = fb.rows.begin();
  while (ia != fa.rows.end() || ib != fb.rows.end()) {
    const bool take_a = ib == fb.rows.end() || (ia != fa.rows.end() && ia->label <= ib->label);
    const bool take_b = ia == fa.rows.end() || (ib != fb.rows.end() && ib->label <= ia->label);
    DiffRow row{take_a ? ia->label : ib->label, take_a ? ia->p : 0.0, take_b ? ib->p : 0.0, 0.0};
    row.delta = row.p_b - row.p_a;
    if (take_a && !take_b && row.p_a >= floor) diff.exclusive_a.push_back(row.label);
    if (take_b && !take_a && row.p_b >= floor) diff.exclusive_b.push_back(row.label);
    diff.rows.push_back(std::move(row));
    if (take_a) ++ia;
    if (take_b) ++ib;
  }
  return diff;
}

GenerationDirective suggest_negative_prompts(const AuditCorpus& corpus,
                                             const std::set<ConceptLabel>& attenuate,
                                             const std::set<ConceptLabel>& amplify) {
  for (const auto& l : attenuate) {
    if (amplify.contains(l)) {
      throw AuditError(ErrorCode::OverlappingSets,
                       "'" + l.str() + "' cannot be both attenuated and amplified");
    }
  }
  GenerationDirective d;
  d.attenuate.assign(attenuate.begin(), attenuate.end());
  d.amplify.assign(amplify.begin(), amplify.end());
  d.negative_text = join_labels(d.attenuate);
  d.positive_suffix = join_labels(d.amplify);

  std::set<ConceptLabel> listed(attenuate);
  listed.insert(amplify.begin(), amplify.end());
  std::optional<FrequencyTable> freq;
  if (corpus.image_count() > 0) freq = concept_frequency(corpus);
  for (const auto& l : listed) {
    const FrequencyRow* row = freq ? freq->find(l) : nullptr;
    d.baseline.push_back(row ? *row : FrequencyRow{l, 0, 0.0});
  }
  return d;
}

json run_summary_json(const AuditCorpus& corpus) {
  const auto& m = corpus.metadata();
  return {{"run_id", corpus.run_id()},
          {"generator_id", m.generator_id},
          {"detector_id", m.detector_id},
          {"K_nominal", m.k_nominal},
          {"created_at", m.created_at},
          {"config_digest", m.config_digest},
          {"prompt_count", corpus.prompt_count()},
          {"image_count", corpus.image_count()}};
}

json to_json(const FrequencyRow& row) {
  return {{"label", row.label.str()}, {"count", row.count}, {"p", row.p}};
}

json to_json(const StabilityRow& row) {
  return {{"label", row.label.str()},
          {"p", row.p},
          {"sigma", row.sigma},
          {"cv", row.cv},
          {"classification", std::string(to_string(row.classification))}};
}

json to_json(const IntervalEstimate& est) {
  return {{"point", est.point}, {"lo", est.lo},       {"hi", est.hi},
          {"method", est.method}, {"groups", est.groups}, {"group_size", est.group_size},
          {"seed", est.seed}};
}

json to_json(const PartnerRow& row) {
  return {{"label", row.label.str()},
          {"joint_count", row.joint_count},
          {"support", row.support},
          {"confidence", row.confidence},
          {"lift", row.lift}};
}

json to_json(const CoocRow& row) {
  return {{"a", row.a.str()},
          {"b", row.b.str()},
          {"joint_count", row.joint_count},
          {"support", row.support},
          {"confidence_ab", row.confidence_ab},
          {"confidence_ba", row.confidence_ba},
          {"lift", row.lift}};
}

json to_json(const EvidenceItem& item) {
  json boxes = json::array();
  for (const auto& b : item.boxes) boxes.push_back(box_json(b));
  json out = {{"image_id", item.image_id},
              {"prompt_id", item.prompt_id},
              {"boxes", std::move(boxes)},
              {"scores", item.scores}};
  out["image_uri"] = item.image_uri ? json(*item.image_uri) : json(nullptr);
  return out;
}

json to_json(const ReverseIndexEntry& entry) {
  json hits = json::array();
  for (const auto& h : entry.prompt_hits) {
    hits.push_back({{"prompt_id", h.prompt_id}, {"image_count", h.image_count}});
  }
  json evidence = json::array();
  for (const auto& e : entry.evidence) evidence.push_back(to_json(e));
  return {{"concept", entry.label.str()},
          {"prompt_hits", std::move(hits)},
          {"evidence", std::move(evidence)},
          {"evidence_total", entry.evidence_total}};
}

json to_json(const AuditCorpus& corpus, const WatchlistFinding& f) {
  json hits = json::array();
  for (std::size_t i = 0; i < f.index.prompt_hits.size(); ++i) {
    const auto& h = f.index.prompt_hits[i];
    const auto& prompt = corpus.prompts()[*corpus.prompt_index(h.prompt_id)];
    hits.push_back({{"prompt_id", h.prompt_id},
                    {"text", prompt.text},
                    {"image_count", h.image_count},
                    {"explicit", static_cast<bool>(f.explicit_mention[i])}});
  }
  json evidence = json::array();
  for (const auto& e : f.index.evidence) evidence.push_back(to_json(e));
  return {{"concept", f.frequency.label.str()},
          {"present", f.frequency.count > 0},
          {"count", f.frequency.count},
          {"p", f.frequency.p},
          {"prompt_hits", std::move(hits)},
          {"implicit_prompts", f.implicit_prompts},
          {"evidence", std::move(evidence)},
          {"evidence_total", f.index.evidence_total}};
}

json flags_json(const AuditCorpus& corpus, const std::vector<WatchlistFinding>& findings) {
  json out = json::array();
  for (const auto& f : findings) out.push_back(to_json(corpus, f));
  return out;
}

json to_json(const ConditionalSlice& slice, const PromptRecord& prompt) {
  json rows = json::array();
  for (const auto& r : slice.rows) {
    rows.push_back({{"label", r.label.str()}, {"count", r.count}, {"p", r.p}});
  }
  return {{"prompt_id", slice.prompt_id},
          {"text", prompt.text},
          {"weight", prompt.weight},
          {"image_count", slice.image_count},
          {"concepts", std::move(rows)}};
}

json partners_json(const std::string& run_id, const ConceptLabel& target, RuleMetric metric,
                   std::size_t k, double min_support, const std::vector<PartnerRow>& partners) {
  json rows = json::array();
  for (const auto& p : partners) rows.push_back(to_json(p));
  return {{"run_id", run_id},
          {"concept", target.str()},
          {"metric", std::string(to_string(metric))},
          {"k", k},
          {"min_support", min_support},
          {"partners", std::move(rows)}};
}

json to_json(const AuditReport& report) {
  const auto& p = report.params;
  json params = {{"tau", p.tau},
                 {"cv_cutoff", p.cv_cutoff},
                 {"top_m", p.top_m},
                 {"top_partners", p.top_partners},
                 {"partner_metric", std::string(to_string(p.partner_metric))},
                 {"min_support", p.min_support},
                 {"ci_groups", p.ci_groups},
                 {"ci_size", report.effective_ci_group_size},
                 {"seed", p.seed},
                 {"evidence_limit", p.evidence_limit}};
  json watch = json::array();
  for (const auto& l : p.watchlist) watch.push_back(l.str());
  params["watchlist"] = std::move(watch);

  json freq_rows = json::array();
  for (const auto& r : report.frequency.rows) freq_rows.push_back(to_json(r));
  json top = json::array();
  for (const auto& t : report.top_concepts) {
    json row = to_json(t.frequency);
    row["ci"] = t.interval ? to_json(*t.interval) : json(nullptr);
    top.push_back(std::move(row));
  }
  json stability_rows = json::array();
  for (const auto& r : report.stability.rows) stability_rows.push_back(to_json(r));
  json cooc = json::array();
  for (const auto& c : report.cooccurrence) {
    json partners = json::array();
    for (const auto& r : c.partners) partners.push_back(to_json(r));
    cooc.push_back({{"concept", c.label.str()}, {"partners", std::move(partners)}});
  }
  json prompts = json::array();
  for (const auto& s : report.prompts) {
    prompts.push_back(to_json(s, report.corpus->prompts()[*report.corpus->prompt_index(s.prompt_id)]));
  }

  json doc = {{"report_schema_version", kReportSchemaVersion},
              {"run", run_summary_json(*report.corpus)},
              {"params", std::move(params)},
              {"frequency",
               {{"total_images", report.frequency.total_images},
                {"weighted", report.frequency.weighted},
                {"concepts", std::move(freq_rows)}}},
              {"top_concepts", std::move(top)},
              {"stability",
               {{"tau", report.stability.tau},
                {"cv_cutoff", report.stability.cv_cutoff},
                {"concepts", std::move(stability_rows)}}},
              {"cooccurrence", std::move(cooc)},
              {"prompts", std::move(prompts)}};
  if (report.flags) doc["flags"] = flags_json(*report.corpus, *report.flags);
  return doc;
}

json to_json(const DiffRow& row) {
  return {{"label", row.label.str()}, {"p_a", row.p_a}, {"p_b", row.p_b}, {"delta", row.delta}};
}

json to_json(const RunDiff& diff) {
  json rows = json::array();
  for (const auto& r : diff.rows) rows.push_back(to_json(r));
  json ex_a = json::array();
  for (const auto& l : diff.exclusive_a) ex_a.push_back(l.str());
  json ex_b = json::array();
  for (const auto& l : diff.exclusive_b) ex_b.push_back(l.str());
  return {{"report_schema_version", kReportSchemaVersion},
          {"run_a", diff.run_a},
          {"run_b", diff.run_b},
          {"floor", diff.floor},
          {"rows", std::move(rows)},
          {"exclusive_a", std::move(ex_a)},
          {"exclusive_b", std::move(ex_b)}};
}

json to_json(const GenerationDirective& d) {
  json att = json::array();
  for (const auto& l : d.attenuate) att.push_back(l.str());
  json amp = json::array();
  for (const auto& l : d.amplify) amp.push_back(l.str());
  json baseline = json::array();
  for (const auto& r : d.baseline) baseline.push_back(to_json(r));
  return {{"negative_text", d.negative_text},
          {"positive_suffix", d.positive_suffix},
          {"attenuate", std::move(att)},
          {"amplify", std::move(amp)},
          {"baseline", std::move(baseline)}};
}

std::string canonical_json(const json& doc) { return doc.dump(2) + "\n"; }

std::string render_markdown(const AuditReport& report) {
  const auto& corpus = *report.corpus;
  const auto& m = corpus.metadata();
  std::ostringstream md;
  md << "# Concept audit: " << md_escape(corpus.run_id()) << "\n\n";
  md << "- generator: `" << m.generator_id << "`\n";
  md << "- detector: `" << m.detector_id << "`\n";
  md << "- prompts: " << corpus.prompt_count() << ", images: " << corpus.image_count()
     << " (K nominal " << m.k_nominal << ")\n";
  md << "- tau " << report.params.tau << ", cv cutoff " << report.params.cv_cutoff << ", seed "
     << report.params.seed << "\n\n";

  md << "## Top concepts\n\n| concept | count | P(c) | 95% interval |\n|---|---:|---:|---|\n";
  for (const auto& t : report.top_concepts) {
    md << "| " << md_escape(t.frequency.label.str()) << " | " << t.frequency.count << " | "
       << fmt(t.frequency.p) << " | ";
    if (t.interval) md << "[" << fmt(t.interval->lo) << ", " << fmt(t.interval->hi) << "]";
    else md << "n/a";
    md << " |\n";
  }

  md << "\n## Stability\n\n| concept | P(c) | sigma | CV | class |\n|---|---:|---:|---:|---|\n";
  for (const auto& r : report.stability.rows) {
    md << "| " << md_escape(r.label.str()) << " | " << fmt(r.p) << " | " << fmt(r.sigma) << " | "
       << fmt(r.cv) << " | " << to_string(r.classification) << " |\n";
  }

  md << "\n## Co-occurrence (" << to_string(report.params.partner_metric) << ")\n\n";
  for (const auto& c : report.cooccurrence) {
    if (c.partners.empty()) continue;
    md << "- **" << md_escape(c.label.str()) << "**: ";
    for (std::size_t i = 0; i < c.partners.size(); ++i) {
      const auto& p = c.partners[i];
      if (i) md << ", ";
      md << md_escape(p.label.str()) << " (support " << fmt(p.support) << ", conf "
         << fmt(p.confidence) << ", lift " << fmt(p.lift) << ")";
    }
    md << "\n";
  }

  if (report.flags) {
    md << "\n## Watchlist\n\n| concept | count | P(c) | prompts | implicit |\n|---|---:|---:|---:|---:|\n";
    for (const auto& f : *report.flags) {
      md << "| " << md_escape(f.frequency.label.str()) << " | " << f.frequency.count << " | "
         << fmt(f.frequency.p) << " | " << f.index.prompt_hits.size() << " | "
         << f.implicit_prompts << " |\n";
    }
  }

  md << "\n## Prompts\n\n";
  for (const auto& s : report.prompts) {
    const auto& prompt = corpus.prompts()[*corpus.prompt_index(s.prompt_id)];
    md << "### " << md_escape(prompt.text) << " (`" << s.prompt_id << "`, " << s.image_count
       << " images)\n\n";
    for (const auto& r : s.rows) {
      md << "- " << md_escape(r.label.str()) << ": " << fmt(r.p) << " (" << r.count << ")\n";
    }
    md << "\n";
  }
  return md.str();
}

std::string render_markdown(const RunDiff& diff) {
  std::ostringstream md;
  md << "# Run comparison: " << md_escape(diff.run_a) << " vs " << md_escape(diff.run_b)
     << "\n\n| concept | P_a | P_b | delta |\n|---|---:|---:|---:|\n";
  for (const auto& r : diff.rows) {
    md << "| " << md_escape(r.label.str()) << " | " << fmt(r.p_a) << " | " << fmt(r.p_b)
       << " | " << fmt(r.delta) << " |\n";
  }
  auto list = [&](const char* title, const std::vector<ConceptLabel>& labels) {
    md << "\n## " << title << " (floor " << fmt(diff.floor) << ")\n\n";
    if (labels.empty()) md << "none\n";
    for (const auto& l : labels) md << "- " << md_escape(l.str()) << "\n";
  };
  list("Only in A", diff.exclusive_a);
  list("Only in B", diff.exclusive_b);
  return md.str();
}

}  // namespace concept_audit
