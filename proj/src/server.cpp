#include "concept_audit/server.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "concept_audit/association.hpp"
#include "concept_audit/metrics.hpp"
#include "concept_audit/reporter.hpp"

namespace concept_audit {

using nlohmann::json;

namespace {

constexpr std::size_t kDefaultPageLimit = 100;
constexpr std::size_t kMaxPageLimit = 10000;

template <typename T>
class SingleFlightCache {
 public:
  template <typename Fn>
  std::shared_ptr<const T> get(const std::string& key, Fn&& compute,
                               std::atomic<std::size_t>& misses) {
    std::promise<std::shared_ptr<const T>> promise;
    std::shared_future<std::shared_ptr<const T>> future;
    bool owner = false;
    {
      std::lock_guard lock(mutex_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        future = it->second;
      } else {
        future = promise.get_future().share();
        entries_.emplace(key, future);
        owner = true;
      }
    }
    if (owner) {
      ++misses;
      try {
        promise.set_value(std::make_shared<const T>(compute()));
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mutex_);
        entries_.erase(key);  // failures are not cached
      }
    }
    return future.get();
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, std::shared_future<std::shared_ptr<const T>>> entries_;
};

struct ConceptMetrics {
  FrequencyTable frequency;
  StabilityTable stability;
};

std::string key_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<std::string> param(const QueryParams& q, const std::string& name) {
  auto it = q.find(name);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

[[noreturn]] void bad_param(const std::string& msg) {
  throw AuditError(ErrorCode::InvalidParameter, msg);
}

double number_param(const QueryParams& q, const std::string& name, double fallback) {
  auto raw = param(q, name);
  if (!raw || raw->empty()) return fallback;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
  if (ec != std::errc() || ptr != raw->data() + raw->size() || !std::isfinite(v)) {
    bad_param("parameter '" + name + "' must be a number, got '" + *raw + "'");
  }
  return v;
}

std::size_t count_param(const QueryParams& q, const std::string& name, std::size_t fallback) {
  auto raw = param(q, name);
  if (!raw || raw->empty()) return fallback;
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), v);
  if (ec != std::errc() || ptr != raw->data() + raw->size()) {
    bad_param("parameter '" + name + "' must be a non-negative integer, got '" + *raw + "'");
  }
  return v;
}

RuleMetric metric_param(const QueryParams& q) {
  const std::string raw = param(q, "metric").value_or("support");
  auto m = parse_rule_metric(raw);
  if (!m) bad_param("metric must be one of support, confidence, lift; got '" + raw + "'");
  return *m;
}

struct Page {
  std::size_t offset = 0;
  std::size_t limit = kDefaultPageLimit;
};

Page page_params(const QueryParams& q) {
  Page p{count_param(q, "offset", 0), count_param(q, "limit", kDefaultPageLimit)};
  if (p.limit < 1 || p.limit > kMaxPageLimit) {
    bad_param("limit must be in [1," + std::to_string(kMaxPageLimit) + "]");
  }
  return p;
}

json paginate(const json& rows, const Page& page) {
  json out = json::array();
  for (std::size_t i = page.offset; i < rows.size() && i < page.offset + page.limit; ++i) {
    out.push_back(rows[i]);
  }
  return out;
}

ApiResponse json_response(int status, const json& body) {
  return ApiResponse{status, body.dump(), "application/json"};
}

ApiResponse error_response(const AuditError& e) {
  int status = 500;
  switch (e.code()) {
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownConcept:
    case ErrorCode::UnknownPrompt:
      status = 404;
      break;
    case ErrorCode::InvalidParameter:
    case ErrorCode::EmptyLabel:
      status = 400;
      break;
    case ErrorCode::EmptyCorpus:
    case ErrorCode::EmptyPrompt:
    case ErrorCode::NotEnoughImages:
      status = 422;
      break;
    default:
      break;
  }
  return json_response(status, {{"error", {{"code", std::string(to_string(e.code()))},
                                           {"message", e.detail()}}}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

std::string content_type_for(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "application/octet-stream";
}

}  // namespace

struct AuditService::Caches {
  SingleFlightCache<ConceptMetrics> metrics;
  SingleFlightCache<std::vector<PartnerRow>> partners;
  SingleFlightCache<RunDiff> diffs;
  mutable std::atomic<std::size_t> misses{0};
};

AuditService::AuditService(std::vector<std::shared_ptr<const AuditCorpus>> corpora,
                           ServerOptions options)
    : options_(std::move(options)), caches_(std::make_unique<Caches>()) {
  for (auto& c : corpora) {
    const std::string id = c->run_id();
    if (!runs_.emplace(id, std::move(c)).second) {
      throw AuditError(ErrorCode::InvalidParameter, "run '" + id + "' loaded twice");
    }
  }
}

AuditService::~AuditService() = default;

std::size_t AuditService::cache_computations() const noexcept { return caches_->misses.load(); }

const AuditCorpus& AuditService::run(const std::string& id) const {
  auto it = runs_.find(id);
  if (it == runs_.end()) throw AuditError(ErrorCode::UnknownRun, "unknown run '" + id + "'");
  return *it->second;
}

ApiResponse AuditService::handle(const std::string& path, const QueryParams& query) const {
  try {
    const auto parts = split_path(path);
    if (parts.size() == 1 && parts[0] == "runs") return list_runs(query);
    if (parts.size() == 3 && parts[0] == "runs" && parts[2] == "concepts") {
      return list_concepts(run(parts[1]), query);
    }
    if (parts.size() == 4 && parts[0] == "runs" && parts[2] == "concepts") {
      return inspect_concept(run(parts[1]), parts[3], query);
    }
    if (parts.size() == 3 && parts[0] == "runs" && parts[2] == "cooccurrence") {
      return partners(run(parts[1]), query);
    }
    if (parts.size() == 1 && parts[0] == "compare") return compare(query);
    if (parts.size() == 2 && parts[0] == "media") return media(parts[1], query);
    return json_response(404, {{"error", {{"code", "NotFound"}, {"message", "no route for " + path}}}});
  } catch (const AuditError& e) {
    return error_response(e);
  }
}

ApiResponse AuditService::list_runs(const QueryParams& q) const {
  const Page page = page_params(q);
  json rows = json::array();
  for (const auto& [id, corpus] : runs_) rows.push_back(run_summary_json(*corpus));
  return json_response(200, {{"total", rows.size()},
                             {"offset", page.offset},
                             {"limit", page.limit},
                             {"runs", paginate(rows, page)}});
}

ApiResponse AuditService::list_concepts(const AuditCorpus& corpus, const QueryParams& q) const {
  const double tau = number_param(q, "tau", kDefaultTau);
  const double cv_cutoff = number_param(q, "cv_cutoff", kDefaultCvCutoff);
  if (!(tau >= 0.0 && tau < 1.0)) bad_param("tau must be in [0,1)");
  if (!(cv_cutoff > 0.0)) bad_param("cv_cutoff must be > 0");
  const std::string sort = param(q, "sort").value_or("p");
  if (sort != "p" && sort != "cv" && sort != "count") bad_param("sort must be one of p, cv, count");
  const std::string order = param(q, "order").value_or("desc");
  if (order != "asc" && order != "desc") bad_param("order must be asc or desc");
  const std::string filter = normalize_text(param(q, "filter").value_or(""));
  const Page page = page_params(q);

  struct Row {
    const FrequencyRow* freq;
    const StabilityRow* stab;
  };
  std::vector<Row> rows;
  std::shared_ptr<const ConceptMetrics> metrics;
  if (corpus.image_count() > 0) {
    metrics = caches_->metrics.get(
        corpus.run_id() + "|" + key_number(tau) + "|" + key_number(cv_cutoff),
        [&] {
          return ConceptMetrics{concept_frequency(corpus),
                                concept_stability(corpus, tau, cv_cutoff)};
        },
        caches_->misses);
    for (const auto& s : metrics->stability.rows) {
      if (!filter.empty() && s.label.str().find(filter) == std::string::npos) continue;
      rows.push_back({metrics->frequency.find(s.label), &s});
    }
  }

  auto key = [&](const Row& r) {
    if (sort == "cv") return r.stab->cv;
    if (sort == "count") return static_cast<double>(r.freq->count);
    return r.freq->p;
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    const double ka = key(a), kb = key(b);
    return order == "desc" ? ka > kb : ka < kb;
  });

  json out_rows = json::array();
  for (const auto& r : rows) {
    json row = to_json(*r.stab);
    row["count"] = r.freq->count;
    out_rows.push_back(std::move(row));
  }
  return json_response(200, {{"run_id", corpus.run_id()},
                             {"tau", tau},
                             {"cv_cutoff", cv_cutoff},
                             {"sort", sort},
                             {"order", order},
                             {"filter", filter},
                             {"total", out_rows.size()},
                             {"offset", page.offset},
                             {"limit", page.limit},
                             {"rows", paginate(out_rows, page)}});
}

ApiResponse AuditService::inspect_concept(const AuditCorpus& corpus, const std::string& raw_label,
                                          const QueryParams& q) const {
  const ConceptLabel label = ConceptLabel::normalize(raw_label);
  const std::size_t k = count_param(q, "k", kDefaultTopPartners);
  if (k < 1) bad_param("k must be >= 1");
  const RuleMetric metric = metric_param(q);
  const double min_support = number_param(q, "min_support", 0.0);
  if (!(min_support >= 0.0 && min_support <= 1.0)) bad_param("min_support must be in [0,1]");
  const std::size_t evidence_limit = count_param(q, "evidence_limit", kDefaultEvidenceLimit);
  const double tau = number_param(q, "tau", kDefaultTau);
  const double cv_cutoff = number_param(q, "cv_cutoff", kDefaultCvCutoff);
  if (!(tau >= 0.0 && tau < 1.0)) bad_param("tau must be in [0,1)");
  if (!(cv_cutoff > 0.0)) bad_param("cv_cutoff must be > 0");

  if (!corpus.concept_id(label)) {
    throw AuditError(ErrorCode::UnknownConcept,
                     "concept '" + label.str() + "' does not occur in run '" + corpus.run_id() + "'");
  }
  auto metrics = caches_->metrics.get(
      corpus.run_id() + "|" + key_number(tau) + "|" + key_number(cv_cutoff),
      [&] {
        return ConceptMetrics{concept_frequency(corpus), concept_stability(corpus, tau, cv_cutoff)};
      },
      caches_->misses);
  const FrequencyRow* freq = metrics->frequency.find(label);
  const StabilityRow* stab = metrics->stability.find(label);

  const auto top = top_cooccurring(corpus, label, k, metric, min_support);
  json frequency = to_json(*freq);
  frequency["total_images"] = metrics->frequency.total_images;
  return json_response(200, {{"run_id", corpus.run_id()},
                             {"concept", label.str()},
                             {"frequency", std::move(frequency)},
                             {"stability", stab ? to_json(*stab) : json(nullptr)},
                             {"reverse_index", to_json(reverse_index(corpus, label, evidence_limit))},
                             {"cooccurrence", partners_json(corpus.run_id(), label, metric, k,
                                                            min_support, top)}});
}

ApiResponse AuditService::partners(const AuditCorpus& corpus, const QueryParams& q) const {
  const auto raw = param(q, "c");
  if (!raw) bad_param("parameter 'c' (concept label) is required");
  const ConceptLabel label = ConceptLabel::normalize(*raw);
  const std::size_t k = count_param(q, "k", kDefaultTopPartners);
  if (k < 1) bad_param("k must be >= 1");
  const RuleMetric metric = metric_param(q);
  const double min_support = number_param(q, "min_support", 0.0);
  if (!(min_support >= 0.0 && min_support <= 1.0)) bad_param("min_support must be in [0,1]");

  auto rows = caches_->partners.get(
      corpus.run_id() + "|" + label.str() + "|" + std::to_string(k) + "|" +
          std::string(to_string(metric)) + "|" + key_number(min_support),
      [&] { return top_cooccurring(corpus, label, k, metric, min_support); }, caches_->misses);
  return json_response(200, partners_json(corpus.run_id(), label, metric, k, min_support, *rows));
}

ApiResponse AuditService::compare(const QueryParams& q) const {
  const auto a = param(q, "a");
  const auto b = param(q, "b");
  if (!a || !b) bad_param("parameters 'a' and 'b' (run ids) are required");
  const double floor = number_param(q, "floor", kDefaultTau);
  if (!(floor >= 0.0 && floor <= 1.0)) bad_param("floor must be in [0,1]");
  const Page page = page_params(q);
  const AuditCorpus& ca = run(*a);
  const AuditCorpus& cb = run(*b);

  auto diff = caches_->diffs.get(*a + "|" + *b + "|" + key_number(floor),
                                 [&] { return compare_runs(ca, cb, floor); }, caches_->misses);
  json doc = to_json(*diff);
  const json rows = doc["rows"];
  doc["total"] = rows.size();
  doc["offset"] = page.offset;
  doc["limit"] = page.limit;
  doc["rows"] = paginate(rows, page);
  return json_response(200, doc);
}

ApiResponse AuditService::media(const std::string& image_id, const QueryParams& q) const {
  auto not_found = [&](const std::string& why) {
    return json_response(404, {{"error", {{"code", "MediaNotFound"}, {"message", why}}}});
  };
  if (options_.media_root.empty()) return not_found("media serving is disabled (no --media-root)");
  const ImageRecord* found = nullptr;
  const auto run_filter = param(q, "run");
  for (const auto& [id, corpus] : runs_) {
    if (run_filter && *run_filter != id) continue;
    if (auto idx = corpus->image_index(image_id)) {
      found = &corpus->images()[*idx];
      break;
    }
  }
  if (!found) return not_found("unknown image '" + image_id + "'");
  if (!found->image_uri) return not_found("image '" + image_id + "' has no image_uri");

  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path root = fs::weakly_canonical(options_.media_root, ec);
  const fs::path file = fs::weakly_canonical(options_.media_root / *found->image_uri, ec);
  if (ec) return not_found("cannot resolve media for '" + image_id + "'");
  const auto rel = file.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") return not_found("media path escapes the media root");

  std::ifstream in(file, std::ios::binary);
  if (!in) return not_found("media file missing for '" + image_id + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ApiResponse{200, buf.str(), content_type_for(file)};
}

struct HttpServer::Impl {
  const AuditService& service;
  httplib::Server server;
  explicit Impl(const AuditService& s) : service(s) {}
};

HttpServer::HttpServer(const AuditService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  const std::string origin = service.options().cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
    ApiResponse r = impl_->service.handle(req.path, req.params);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  });
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace concept_audit
