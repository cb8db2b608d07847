#pragma once

// HTTP front end for the review workflow and annotation reports.
//
//   GET  /tasks?offset=&limit=     paged task summaries
//   GET  /tasks/{id}               task, proposal, decisions, revision
//   POST /tasks/{id}/decision      {"reviewer","action","label"?,"conditions"?,"revision"}
//   POST /trace                    {"conditions"} -> entailed label and rule trace
//   GET  /reports/{post_id}        annotation report (structured and human)
//   POST /votes/{post_id}          {"beneficial": bool, "voter"?}
//   GET  /stats                    decision counts, agreement, benefit rate
//   GET  /export                   finalized dataset
//
// Every body is JSON. Errors are {"error": code, "message": ...}.

#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "pkil/annotator.hpp"
#include "pkil/review_log.hpp"

namespace httplib {
class Server;
}

namespace pkil {

inline constexpr const char* kServiceTokenEnv = "PKIL_SERVICE_TOKEN";
inline constexpr const char* kServicePortEnv = "PKIL_PORT";

struct ServiceConfig {
  std::optional<std::string> token;  // bearer token required on every request when set
  std::size_t required_reviewers = 3;
  std::size_t default_page_size = 50;
  std::size_t max_page_size = 500;
};

class ReviewService {
 public:
  /// `model` and `source` are optional; without them /reports answers 503.
  ReviewService(ReviewStore& store, ServiceConfig config, const ThresholdModel* model = nullptr,
                const EmbeddingSource* source = nullptr);
  ~ReviewService();
  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  void listen();
  void stop();

  /// The /stats document; a pure function of the store state.
  Json stats() const;

 private:
  void install_routes();

  ReviewStore& store_;
  ServiceConfig config_;
  const ThresholdModel* model_;
  const EmbeddingSource* source_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace pkil
