#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "concept_audit/association.hpp"
#include "concept_audit/atomic_file.hpp"
#include "concept_audit/metrics.hpp"
#include "concept_audit/prompt_spec.hpp"
#include "concept_audit/record_ingest.hpp"
#include "concept_audit/reporter.hpp"
#include "concept_audit/server.hpp"

namespace concept_audit::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

class Io {
 public:
  Io(std::istream& in, std::ostream& out, std::ostream& err) : in_(in), out_(out), err_(err) {}

  std::ostream& err() { return err_; }

  void emit(const std::string& path, const std::string& contents) {
    if (path.empty() || path == "-") {
      out_ << contents;
      out_.flush();
    } else {
      write_file_atomic(path, contents);
    }
  }

  AuditCorpus load(const std::string& path) {
    if (path == "-") return parse_records({RecordSource{"<stdin>", &in_}}).corpus;
    return load_corpus(path);
  }

  IngestResult ingest(const std::vector<std::string>& paths, const IngestOptions& options) {
    std::vector<std::unique_ptr<std::ifstream>> files;
    std::vector<RecordSource> sources;
    for (const auto& p : paths) {
      if (p == "-") {
        sources.push_back({"<stdin>", &in_});
        continue;
      }
      files.push_back(std::make_unique<std::ifstream>(p, std::ios::binary));
      if (!*files.back()) throw AuditError(ErrorCode::IoFailure, "cannot read " + p);
      sources.push_back({p, files.back().get()});
    }
    return parse_records(sources, options);
  }

 private:
  std::istream& in_;
  std::ostream& out_;
  std::ostream& err_;
};

std::set<ConceptLabel> label_set(const std::vector<std::string>& raw) {
  std::set<ConceptLabel> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (normalize_text(part).empty()) continue;
      out.insert(ConceptLabel::normalize(part));
    }
  }
  return out;
}

RuleMetric metric_or_throw(const std::string& raw) {
  auto m = parse_rule_metric(raw);
  check(m.has_value(), "--metric must be one of support, confidence, lift (got '" + raw + "')");
  return *m;
}

std::string prompt_line(const PromptRecord& p) {
  return json{{"kind", "prompt"},
              {"prompt_id", p.prompt_id},
              {"text", p.text},
              {"weight", p.weight},
              {"provenance", std::string(to_string(p.provenance))}}
             .dump();
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  Io io(in, out, err);
  CLI::App app{"Concept-level auditing of text-to-image generations", "concept-audit"};
  app.require_subcommand(1);

  // expand-prompts
  auto* expand = app.add_subcommand("expand-prompts", "Expand a prompt-spec file into prompt lines");
  std::string spec_path, expand_out;
  std::optional<std::size_t> sample_n;
  std::uint64_t sample_seed = 0;
  expand->add_option("--prompt-spec", spec_path, "Prompt distribution document (JSON)")->required();
  expand->add_option("--out", expand_out, "Output JSONL path ('-' for stdout)");
  expand->add_option("--sample", sample_n, "Draw N prompts with replacement instead of expanding");
  expand->add_option("--seed", sample_seed, "Sampling seed");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate detection records and build a corpus");
  std::vector<std::string> record_paths;
  std::string alias_path, ingest_out;
  bool lenient = false;
  ingest->add_option("--records", record_paths, "Record files ('-' for stdin)")->required();
  ingest->add_option("--aliases", alias_path, "JSON alias map {label: canonical}");
  ingest->add_option("--out", ingest_out, "Corpus output path ('-' for stdout)")->required();
  ingest->add_flag("--lenient", lenient, "Skip bad lines instead of failing");

  // audit
  auto* audit = app.add_subcommand("audit", "Compute the audit report for a corpus");
  std::string corpus_path, audit_out, watchlist_path, format = "json", partner_metric = "support";
  ReportParams params;
  std::optional<std::int64_t> ci_size;
  audit->add_option("--corpus", corpus_path, "Corpus path ('-' for stdin)")->required();
  audit->add_option("--tau", params.tau, "Frequency threshold for stability, in [0,1)");
  audit->add_option("--cv-cutoff", params.cv_cutoff, "CV below which a concept is persistent");
  audit->add_option("--ci-groups", params.ci_groups, "Subsample groups (0 disables intervals)");
  audit->add_option("--ci-size", ci_size, "Images per subsample group");
  audit->add_option("--seed", params.seed, "Subsampling seed");
  audit->add_option("--top-m", params.top_m, "Number of top concepts");
  audit->add_option("--k", params.top_partners, "Partners per top concept");
  audit->add_option("--metric", partner_metric, "Partner ranking: support|confidence|lift");
  audit->add_option("--min-support", params.min_support, "Minimum pair support");
  audit->add_option("--watchlist", watchlist_path, "File with one concept per line");
  audit->add_option("--format", format, "json|md");
  audit->add_option("--out", audit_out, "Report path ('-' for stdout)");

  // cooc
  auto* cooc = app.add_subcommand("cooc", "Top co-occurring partners of a concept");
  std::string cooc_corpus, cooc_concept, cooc_metric = "lift", cooc_out;
  std::size_t cooc_k = 20;
  double cooc_min_support = 0.0;
  cooc->add_option("--corpus", cooc_corpus, "Corpus path")->required();
  cooc->add_option("--concept", cooc_concept, "Concept label")->required();
  cooc->add_option("--k", cooc_k, "Number of partners");
  cooc->add_option("--metric", cooc_metric, "support|confidence|lift");
  cooc->add_option("--min-support", cooc_min_support, "Minimum pair support");
  cooc->add_option("--out", cooc_out, "Output path ('-' for stdout)");

  // flag
  auto* flag = app.add_subcommand("flag", "Scan detections for watchlist concepts");
  std::string flag_corpus, flag_watchlist, flag_out;
  std::size_t evidence_limit = kDefaultEvidenceLimit;
  flag->add_option("--corpus", flag_corpus, "Corpus path")->required();
  flag->add_option("--watchlist", flag_watchlist, "File with one concept per line")->required();
  flag->add_option("--evidence-limit", evidence_limit, "Evidence images per concept");
  flag->add_option("--out", flag_out, "Output path ('-' for stdout)");

  // diff
  auto* diff = app.add_subcommand("diff", "Compare concept frequencies of two runs");
  std::string diff_a, diff_b, diff_out, diff_format = "json";
  double floor = kDefaultTau;
  diff->add_option("--a", diff_a, "Corpus A")->required();
  diff->add_option("--b", diff_b, "Corpus B")->required();
  diff->add_option("--floor", floor, "Minimum frequency for exclusive concepts, in [0,1]");
  diff->add_option("--format", diff_format, "json|md");
  diff->add_option("--out", diff_out, "Output path ('-' for stdout)");

  // suggest-negative
  auto* negative = app.add_subcommand("suggest-negative",
                                      "Build a negative-prompt directive for the generation bridge");
  std::string neg_corpus, neg_out;
  std::vector<std::string> attenuate_raw, amplify_raw;
  negative->add_option("--corpus", neg_corpus, "Corpus path")->required();
  negative->add_option("--attenuate", attenuate_raw, "Concepts to suppress (comma-separated)");
  negative->add_option("--amplify", amplify_raw, "Concepts to emphasize (comma-separated)");
  negative->add_option("--out", neg_out, "Output path ('-' for stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve corpora over the read-only HTTP API");
  std::vector<std::string> serve_corpora;
  std::string media_root, cors_origin = "*", host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--corpus", serve_corpora, "Corpus paths")->required();
  serve->add_option("--media-root", media_root, "Directory holding evidence images");
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--cors-origin", cors_origin, "Allowed CORS origin");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*expand) {
      check(!sample_n || *sample_n >= 1, "--sample must be >= 1");
      const auto spec = load_prompt_spec(spec_path);
      std::string body;
      if (sample_n) {
        auto drawn = sample_prompts(spec, *sample_n, sample_seed);
        for (std::size_t i = 0; i < drawn.size(); ++i) {
          drawn[i].prompt_id += "@" + std::to_string(i);
          body += prompt_line(drawn[i]) + "\n";
        }
      } else {
        for (const auto& p : expand_distribution(spec)) body += prompt_line(p) + "\n";
      }
      io.emit(expand_out, body);
      io.err() << "spec digest " << spec_digest(spec) << "\n";
      return kExitOk;
    }

    if (*ingest) {
      IngestOptions options;
      options.lenient = lenient;
      std::optional<IngestResult> result;
      try {
        result.emplace(io.ingest(record_paths, options));
      } catch (const IngestFailure& e) {
        for (const auto& d : e.diagnostics()) {
          err << d.source << ":" << d.line << ": " << to_string(d.code) << ": " << d.message << "\n";
        }
        err << "ingest failed: " << e.diagnostics().size() << " bad line(s) of " << e.body_lines()
            << "; rerun with --lenient to skip them\n";
        return kExitData;
      }
      for (const auto& d : result->diagnostics) {
        err << d.source << ":" << d.line << ": skipped: " << to_string(d.code) << ": "
            << d.message << "\n";
      }
      AuditCorpus corpus = alias_path.empty()
                               ? std::move(result->corpus)
                               : apply_alias_map(result->corpus, load_alias_file(alias_path));
      io.emit(ingest_out, serialize_corpus(corpus));
      err << "ingested " << result->records << " record(s) from " << result->body_lines
          << " line(s), " << result->diagnostics.size() << " skipped; " << corpus.prompt_count()
          << " prompts, " << corpus.image_count() << " images, " << corpus.concepts().size()
          << " concepts\n";
      return kExitOk;
    }

    if (*audit) {
      check(params.tau >= 0.0 && params.tau < 1.0, "tau must be in [0,1)");
      check(params.cv_cutoff > 0.0 && std::isfinite(params.cv_cutoff), "cv-cutoff must be > 0");
      check(params.ci_groups == 0 || params.ci_groups >= 2, "ci-groups must be 0 or >= 2");
      check(!ci_size || *ci_size >= 1, "ci-size must be >= 1");
      check(params.top_m >= 1, "top-m must be >= 1");
      check(params.top_partners >= 1, "k must be >= 1");
      check(params.min_support >= 0.0 && params.min_support <= 1.0, "min-support must be in [0,1]");
      check(format == "json" || format == "md", "format must be json or md");
      params.partner_metric = metric_or_throw(partner_metric);
      params.ci_group_size = ci_size;
      if (!watchlist_path.empty()) params.watchlist = load_watchlist(watchlist_path);

      const AuditCorpus corpus = io.load(corpus_path);
      const AuditReport report = build_report(corpus, params);
      io.emit(audit_out, format == "md" ? render_markdown(report) : canonical_json(to_json(report)));
      return kExitOk;
    }

    if (*cooc) {
      check(cooc_k >= 1, "k must be >= 1");
      check(cooc_min_support >= 0.0 && cooc_min_support <= 1.0, "min-support must be in [0,1]");
      const RuleMetric metric = metric_or_throw(cooc_metric);
      const AuditCorpus corpus = io.load(cooc_corpus);
      const ConceptLabel label = ConceptLabel::normalize(cooc_concept);
      const auto rows = top_cooccurring(corpus, label, cooc_k, metric, cooc_min_support);
      io.emit(cooc_out, canonical_json(partners_json(corpus.run_id(), label, metric, cooc_k,
                                                     cooc_min_support, rows)));
      return kExitOk;
    }

    if (*flag) {
      const auto watchlist = load_watchlist(flag_watchlist);
      const AuditCorpus corpus = io.load(flag_corpus);
      const auto findings = watchlist_scan(corpus, watchlist, evidence_limit);
      json doc = {{"run", run_summary_json(corpus)}, {"flags", flags_json(corpus, findings)}};
      io.emit(flag_out, canonical_json(doc));
      return kExitOk;
    }

    if (*diff) {
      check(floor >= 0.0 && floor <= 1.0, "floor must be in [0,1]");
      check(diff_format == "json" || diff_format == "md", "format must be json or md");
      const AuditCorpus a = io.load(diff_a);
      const AuditCorpus b = io.load(diff_b);
      const RunDiff d = compare_runs(a, b, floor);
      io.emit(diff_out, diff_format == "md" ? render_markdown(d) : canonical_json(to_json(d)));
      return kExitOk;
    }

    if (*negative) {
      const auto attenuate = label_set(attenuate_raw);
      const auto amplify = label_set(amplify_raw);
      const AuditCorpus corpus = io.load(neg_corpus);
      io.emit(neg_out, canonical_json(to_json(suggest_negative_prompts(corpus, attenuate, amplify))));
      return kExitOk;
    }

    if (*serve) {
      check(port >= 0 && port <= 65535, "port must be in [0,65535]");
      std::vector<std::shared_ptr<const AuditCorpus>> corpora;
      for (const auto& p : serve_corpora) {
        corpora.push_back(std::make_shared<const AuditCorpus>(load_corpus(p)));
      }
      AuditService service(std::move(corpora), ServerOptions{media_root, cors_origin});
      HttpServer server(service);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        err << "error: cannot bind " << host << ":" << port << "\n";
        return kExitData;
      }
      err << "serving " << serve_corpora.size() << " run(s) on http://" << host << ":" << bound
          << "\n";
      return server.listen() ? kExitOk : kExitData;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IngestFailure& e) {
    for (const auto& d : e.diagnostics()) {
      err << d.source << ":" << d.line << ": " << to_string(d.code) << ": " << d.message << "\n";
    }
    return kExitData;
  } catch (const AuditError& e) {
    err << "error: " << e.what() << "\n";
    const bool usage = e.code() == ErrorCode::InvalidParameter || e.code() == ErrorCode::OverlappingSets;
    return usage ? kExitValidation : kExitData;
  }
  return kExitValidation;
}

}  // namespace concept_audit::cli
