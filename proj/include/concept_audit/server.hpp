#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "concept_audit/corpus.hpp"

namespace concept_audit {

struct ServerOptions {
  std::filesystem::path media_root;
  std::string cors_origin = "*";
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

using QueryParams = std::multimap<std::string, std::string>;

/// Read-only query service over loaded corpora. Handlers are const and safe
/// to call concurrently; derived tables are cached per (run, parameters) with
/// single-flight computation on a miss.
///
///   GET /runs
///   GET /runs/{id}/concepts?sort=p|cv|count&order=desc|asc&filter=&tau=&cv_cutoff=
///   GET /runs/{id}/concepts/{label}?k=&metric=&min_support=&evidence_limit=&tau=&cv_cutoff=
///   GET /runs/{id}/cooccurrence?c=&k=&metric=&min_support=
///   GET /compare?a=&b=&floor=
///   GET /media/{image_id}[?run=]
///
/// List endpoints accept offset/limit and report a stable `total`.
class AuditService {
 public:
  AuditService(std::vector<std::shared_ptr<const AuditCorpus>> corpora, ServerOptions options);
  ~AuditService();
  AuditService(const AuditService&) = delete;
  AuditService& operator=(const AuditService&) = delete;

  /// `path` is the decoded request path.
  ApiResponse handle(const std::string& path, const QueryParams& query) const;

  const ServerOptions& options() const noexcept { return options_; }
  /// Number of cache misses computed so far (all caches).
  std::size_t cache_computations() const noexcept;

 private:
  struct Caches;

  ApiResponse list_runs(const QueryParams& q) const;
  ApiResponse list_concepts(const AuditCorpus& run, const QueryParams& q) const;
  ApiResponse inspect_concept(const AuditCorpus& run, const std::string& label,
                              const QueryParams& q) const;
  ApiResponse partners(const AuditCorpus& run, const QueryParams& q) const;
  ApiResponse compare(const QueryParams& q) const;
  ApiResponse media(const std::string& image_id, const QueryParams& q) const;
  const AuditCorpus& run(const std::string& id) const;

  std::map<std::string, std::shared_ptr<const AuditCorpus>> runs_;
  ServerOptions options_;
  std::unique_ptr<Caches> caches_;
};

/// cpp-httplib front end for an AuditService.
class HttpServer {
 public:
  explicit HttpServer(const AuditService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called. Blocks.
  bool listen();
  void stop();
  bool running() const;
  /// Blocks until the listener thread is accepting.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace concept_audit
