#include "concept_audit/record_ingest.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <variant>

#include <json.hpp>

#include "concept_audit/atomic_file.hpp"

namespace concept_audit {

namespace {

using nlohmann::json;

struct LineError {
  ErrorCode code;
  std::string message;
};

struct Header {
  std::string run_id;
  RunMetadata metadata;
};

using BodyRecord = std::variant<PromptRecord, ImageRecord>;

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r\n") == std::string::npos;
}

const json& require(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    throw LineError{ErrorCode::MalformedLine, std::string("missing field '") + key + "'"};
  }
  return *it;
}

std::string require_string(const json& obj, const char* key, bool non_empty = true) {
  const json& v = require(obj, key);
  if (!v.is_string()) {
    throw LineError{ErrorCode::MalformedLine, std::string("field '") + key + "' must be a string"};
  }
  std::string s = v.get<std::string>();
  if (non_empty && s.empty()) {
    throw LineError{ErrorCode::MalformedLine, std::string("field '") + key + "' is empty"};
  }
  return s;
}

std::int64_t require_int(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer()) {
    throw LineError{ErrorCode::MalformedLine,
                    std::string("field '") + key + "' must be an integer"};
  }
  return v.get<std::int64_t>();
}

std::optional<double> optional_number(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) {
    throw LineError{ErrorCode::MalformedLine, std::string("field '") + key + "' must be a number"};
  }
  return it->get<double>();
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw LineError{ErrorCode::MalformedLine, std::string("field '") + key + "' must be a string"};
  }
  return it->get<std::string>();
}

json parse_json_line(const std::string& line) {
  json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw LineError{ErrorCode::MalformedLine, "line is not a JSON object"};
  }
  return doc;
}

Header parse_header(const json& doc) {
  const std::int64_t version = require_int(doc, "schema_version");
  if (version != kRecordSchemaVersion) {
    throw LineError{ErrorCode::VersionMismatch,
                    "schema_version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kRecordSchemaVersion) + ")"};
  }
  Header h;
  h.run_id = require_string(doc, "run_id");
  h.metadata.generator_id = require_string(doc, "generator_id", false);
  h.metadata.detector_id = require_string(doc, "detector_id", false);
  h.metadata.k_nominal = require_int(doc, "K_nominal");
  if (h.metadata.k_nominal < 1) {
    throw LineError{ErrorCode::MalformedLine, "K_nominal must be >= 1"};
  }
  h.metadata.created_at = optional_string(doc, "created_at").value_or("");
  h.metadata.config_digest = optional_string(doc, "config_digest").value_or("");
  return h;
}

PromptRecord parse_prompt(const json& doc) {
  PromptRecord p;
  p.prompt_id = require_string(doc, "prompt_id");
  p.text = require_string(doc, "text", false);
  p.weight = optional_number(doc, "weight").value_or(1.0);
  if (!(p.weight >= 0.0)) throw LineError{ErrorCode::MalformedLine, "weight must be >= 0"};
  const auto prov = optional_string(doc, "provenance").value_or("template");
  auto parsed = parse_provenance(prov);
  if (!parsed) {
    throw LineError{ErrorCode::MalformedLine, "provenance must be 'template' or 'empirical'"};
  }
  p.provenance = *parsed;
  return p;
}

ImageRecord parse_image(const json& doc, const std::string& default_detector) {
  ImageRecord img;
  img.image_id = require_string(doc, "image_id");
  img.prompt_id = require_string(doc, "prompt_id");
  img.sample_index = require_int(doc, "sample_index");
  if (img.sample_index < 0) throw LineError{ErrorCode::MalformedLine, "sample_index must be >= 0"};
  img.image_uri = optional_string(doc, "image_uri");
  img.detector_id = optional_string(doc, "detector_id").value_or(default_detector);

  const auto width = optional_number(doc, "image_width");
  const auto height = optional_number(doc, "image_height");
  if (width.has_value() != height.has_value()) {
    throw LineError{ErrorCode::MalformedLine,
                    "image_width and image_height must be given together"};
  }
  if (width && (!(*width > 0.0) || !(*height > 0.0))) {
    throw LineError{ErrorCode::MalformedLine, "image dimensions must be positive"};
  }

  const json& dets = require(doc, "detections");
  if (!dets.is_array()) throw LineError{ErrorCode::MalformedLine, "detections must be an array"};
  img.detections.reserve(dets.size());
  for (const json& d : dets) {
    if (!d.is_object()) throw LineError{ErrorCode::MalformedLine, "detection must be an object"};
    const std::string raw_label = require_string(d, "label", false);
    std::optional<ConceptLabel> label;
    try {
      label = ConceptLabel::normalize(raw_label);
    } catch (const AuditError& e) {
      throw LineError{ErrorCode::MalformedLine, e.detail()};
    }
    const json& box = require(d, "box");
    if (!box.is_array() || box.size() != 4 ||
        !std::all_of(box.begin(), box.end(), [](const json& v) { return v.is_number(); })) {
      throw LineError{ErrorCode::MalformedLine, "box must be an array of 4 numbers"};
    }
    const double x0 = box[0].get<double>(), y0 = box[1].get<double>();
    const double x1 = box[2].get<double>(), y1 = box[3].get<double>();
    std::optional<BoundingBox> bb;
    try {
      bb = width ? BoundingBox::from_pixels(x0, y0, x1, y1, *width, *height)
                 : BoundingBox::make(x0, y0, x1, y1);
    } catch (const AuditError& e) {
      throw LineError{ErrorCode::BoxOutOfRange,
                      "detection '" + label->str() + "': " + e.detail()};
    }
    const double score = optional_number(d, "score").value_or(1.0);
    if (!(score >= 0.0 && score <= 1.0)) {
      throw LineError{ErrorCode::MalformedLine, "score must be in [0,1]"};
    }
    img.detections.push_back(Detection{std::move(*label), *bb, score});
  }
  return img;
}

struct PositionedRecord {
  std::string source;
  std::size_t line;
  BodyRecord record;
};

}  // namespace

IngestFailure::IngestFailure(std::vector<IngestDiagnostic> diagnostics, std::size_t body_lines,
                             std::size_t records)
    : AuditError(diagnostics.front().code,
                 diagnostics.front().source + ": " + diagnostics.front().message +
                     (diagnostics.size() > 1
                          ? " (+" + std::to_string(diagnostics.size() - 1) + " more)"
                          : std::string()),
                 diagnostics.front().line),
      diagnostics_(std::move(diagnostics)),
      body_lines_(body_lines),
      records_(records) {}

IngestResult parse_records(const std::vector<RecordSource>& sources,
                           const IngestOptions& options) {
  std::optional<Header> header;
  std::vector<IngestDiagnostic> diagnostics;
  std::vector<PositionedRecord> parsed;
  std::size_t body_lines = 0;

  for (const auto& src : sources) {
    std::string line;
    std::size_t line_no = 0;
    bool first_line = true;
    while (std::getline(*src.stream, line)) {
      ++line_no;
      if (is_blank(line)) continue;
      try {
        if (first_line) {
          first_line = false;
          json doc = json::parse(line, nullptr, false);
          const bool looks_like_header =
              doc.is_object() && doc.contains("schema_version") && !doc.contains("kind");
          if (looks_like_header) {
            try {
              Header h = parse_header(doc);
              if (!header) header = std::move(h);
            } catch (const LineError& e) {
              throw AuditError(e.code, src.name + ": invalid header: " + e.message, line_no);
            }
            continue;
          }
          if (!header) {
            throw AuditError(ErrorCode::MissingHeader,
                             src.name + ": first line is not a run header", line_no);
          }
        }
        ++body_lines;
        json doc = parse_json_line(line);
        const std::string kind = require_string(doc, "kind");
        if (kind == "prompt") {
          parsed.push_back({src.name, line_no, parse_prompt(doc)});
        } else if (kind == "image") {
          parsed.push_back({src.name, line_no, parse_image(doc, header->metadata.detector_id)});
        } else {
          throw LineError{ErrorCode::MalformedLine, "unknown kind '" + kind + "'"};
        }
      } catch (const LineError& e) {
        diagnostics.push_back({src.name, line_no, e.code, e.message});
      }
    }
    if (src.stream->bad()) throw AuditError(ErrorCode::IoFailure, "read failed: " + src.name);
  }
  if (!header) throw AuditError(ErrorCode::MissingHeader, "input has no run header");

  // Cross-line checks: uniqueness and prompt references.
  std::vector<PromptRecord> prompts;
  std::vector<ImageRecord> images;
  std::unordered_set<std::string> prompt_ids;
  std::unordered_set<std::string> image_ids;
  std::set<std::pair<std::string, std::int64_t>> samples;
  std::vector<const PositionedRecord*> image_lines;

  for (const auto& rec : parsed) {
    if (const auto* p = std::get_if<PromptRecord>(&rec.record)) {
      if (!prompt_ids.insert(p->prompt_id).second) {
        diagnostics.push_back({rec.source, rec.line, ErrorCode::DuplicatePromptId,
                               "duplicate prompt_id '" + p->prompt_id + "'"});
        continue;
      }
      prompts.push_back(*p);
    } else {
      image_lines.push_back(&rec);
    }
  }
  for (const auto* rec : image_lines) {
    const auto& img = std::get<ImageRecord>(rec->record);
    if (!prompt_ids.contains(img.prompt_id)) {
      diagnostics.push_back({rec->source, rec->line, ErrorCode::UnknownPromptId,
                             "unknown prompt_id '" + img.prompt_id + "'"});
      continue;
    }
    if (!image_ids.insert(img.image_id).second) {
      diagnostics.push_back({rec->source, rec->line, ErrorCode::DuplicateImageId,
                             "duplicate image_id '" + img.image_id + "'"});
      continue;
    }
    if (!samples.emplace(img.prompt_id, img.sample_index).second) {
      diagnostics.push_back({rec->source, rec->line, ErrorCode::DuplicateSample,
                             "duplicate sample_index " + std::to_string(img.sample_index) +
                                 " for prompt '" + img.prompt_id + "'"});
      continue;
    }
    images.push_back(img);
  }

  const std::size_t records = prompts.size() + images.size();
  std::stable_sort(diagnostics.begin(), diagnostics.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.line) < std::tie(b.source, b.line);
  });
  if (!options.lenient && !diagnostics.empty()) {
    throw IngestFailure(std::move(diagnostics), body_lines, records);
  }
  return IngestResult{
      AuditCorpus(header->run_id, header->metadata, std::move(prompts), std::move(images)),
      std::move(diagnostics), body_lines, records};
}

IngestResult parse_records(std::istream& in, const IngestOptions& options) {
  return parse_records({RecordSource{"<stream>", &in}}, options);
}

IngestResult parse_record_files(const std::vector<std::filesystem::path>& paths,
                                const IngestOptions& options) {
  std::vector<std::ifstream> files;
  std::vector<RecordSource> sources;
  files.reserve(paths.size());
  for (const auto& p : paths) {
    if (p == "-") {
      sources.push_back({"<stdin>", &std::cin});
      continue;
    }
    files.emplace_back(p, std::ios::binary);
    if (!files.back()) throw AuditError(ErrorCode::IoFailure, "cannot read " + p.string());
    sources.push_back({p.string(), &files.back()});
  }
  return parse_records(sources, options);
}

std::string serialize_corpus(const AuditCorpus& corpus) {
  const auto& meta = corpus.metadata();
  std::string out;
  json header = {{"schema_version", kRecordSchemaVersion},
                 {"run_id", corpus.run_id()},
                 {"generator_id", meta.generator_id},
                 {"detector_id", meta.detector_id},
                 {"K_nominal", meta.k_nominal},
                 {"created_at", meta.created_at},
                 {"config_digest", meta.config_digest}};
  out += header.dump() + "\n";
  for (const auto& p : corpus.prompts()) {
    json line = {{"kind", "prompt"},
                 {"prompt_id", p.prompt_id},
                 {"text", p.text},
                 {"weight", p.weight},
                 {"provenance", std::string(to_string(p.provenance))}};
    out += line.dump() + "\n";
  }
  for (const auto& img : corpus.images()) {
    json dets = json::array();
    for (const auto& d : img.detections) {
      dets.push_back({{"label", d.label.str()},
                      {"box", {d.box.x0(), d.box.y0(), d.box.x1(), d.box.y1()}},
                      {"score", d.score}});
    }
    json line = {{"kind", "image"},
                 {"image_id", img.image_id},
                 {"prompt_id", img.prompt_id},
                 {"sample_index", img.sample_index},
                 {"detections", std::move(dets)}};
    if (img.image_uri) line["image_uri"] = *img.image_uri;
    if (img.detector_id != meta.detector_id) line["detector_id"] = img.detector_id;
    out += line.dump() + "\n";
  }
  return out;
}

void write_corpus(const AuditCorpus& corpus, const std::filesystem::path& destination) {
  write_file_atomic(destination, serialize_corpus(corpus));
}

AuditCorpus load_corpus(const std::filesystem::path& path) {
  return parse_record_files({path}).corpus;
}

AuditCorpus apply_alias_map(const AuditCorpus& corpus,
                            const std::map<std::string, std::string>& aliases) {
  std::map<ConceptLabel, ConceptLabel> resolved;
  for (const auto& [from, to] : aliases) {
    ConceptLabel a = ConceptLabel::normalize(from);
    ConceptLabel b = ConceptLabel::normalize(to);
    if (a == b) continue;
    auto [it, inserted] = resolved.emplace(a, b);
    if (!inserted && it->second != b) {
      throw AuditError(ErrorCode::AliasCycle, "label '" + a.str() + "' aliased twice");
    }
  }
  for (const auto& [from, to] : resolved) {
    if (resolved.contains(to)) {
      throw AuditError(ErrorCode::AliasCycle, "alias chain '" + from.str() + "' -> '" +
                                                  to.str() + "' -> '" +
                                                  resolved.at(to).str() + "'");
    }
  }

  std::vector<PromptRecord> prompts(corpus.prompts().begin(), corpus.prompts().end());
  std::vector<ImageRecord> images(corpus.images().begin(), corpus.images().end());
  if (!resolved.empty()) {
    for (auto& img : images) {
      for (auto& d : img.detections) {
        if (auto it = resolved.find(d.label); it != resolved.end()) d.label = it->second;
      }
    }
  }
  return AuditCorpus(corpus.run_id(), corpus.metadata(), std::move(prompts), std::move(images));
}

std::map<std::string, std::string> load_alias_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditError(ErrorCode::IoFailure, "cannot read " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw AuditError(ErrorCode::InvalidParameter,
                     path.string() + ": alias file must be a JSON object of label -> label");
  }
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : doc.items()) {
    if (!v.is_string()) {
      throw AuditError(ErrorCode::InvalidParameter, "alias target for '" + k + "' must be a string");
    }
    out[k] = v.get<std::string>();
  }
  return out;
}

}  // namespace concept_audit
