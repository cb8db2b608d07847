#include "pkil/service.hpp"

#include <chrono>
#include <mutex>
#include <set>

#include <httplib.h>

#include "pkil/metrics.hpp"

namespace pkil {
namespace {

constexpr const char* kJson = "application/json";

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                 Json extra = Json::object()) {
  extra["error"] = code;
  extra["message"] = message;
  reply(res, status, extra);
}

int status_for(const std::string& code) {
  if (code == "unknown-task" || code == "unknown-post") return 404;
  if (code == "stale-revision" || code == "duplicate-decision") return 409;
  if (code == "inconsistent-edit") return 422;
  return 400;
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto value = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(name);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error("invalid-argument", std::string("query parameter ") + name + " must be a non-negative integer");
  }
}

std::string task_status(const ReviewTask& t, std::size_t required) {
  if (t.decisions.empty()) return "pending";
  return t.decisions.size() >= required ? "reviewed" : "in-review";
}

Json pk_payload(const ProcessKnowledge& pk) {
  Json conds = Json::array();
  for (const auto& c : pk.conditions()) conds.push_back({{"id", c.id}, {"text", c.text}});
  Json rules = Json::array();
  for (const auto& r : pk.rules()) rules.push_back({{"conditions", r.conditions}, {"label", r.label}});
  return {{"conditions", conds},
          {"rules", rules},
          {"fallback", pk.fallback_label() ? Json(*pk.fallback_label()) : Json(nullptr)},
          {"labels", pk.label_set()}};
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

}  // namespace

ReviewService::ReviewService(ReviewStore& store, ServiceConfig config, const ThresholdModel* model,
                             const EmbeddingSource* source)
    : store_(store),
      config_(std::move(config)),
      model_(model),
      source_(source),
      server_(std::make_unique<httplib::Server>()) {
  if (model_ != nullptr && !(model_->pk == store_.pk())) {
    throw Error("pk-checksum-mismatch", "model process knowledge differs from the review store's");
  }
  install_routes();
}

ReviewService::~ReviewService() = default;

int ReviewService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error("bind-failed", "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error("bind-failed", "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void ReviewService::listen() { server_->listen_after_bind(); }

void ReviewService::stop() { server_->stop(); }

Json ReviewService::stats() const {
  std::shared_lock lock(mutex_);
  const auto& tasks = store_.tasks();
  std::size_t retain = 0;
  std::size_t edit = 0;
  std::set<std::string> reviewers;
  for (const auto& t : tasks) {
    for (const auto& d : t.decisions) {
      (d.action == ReviewAction::retain ? retain : edit) += 1;
      reviewers.insert(d.reviewer);
    }
  }
  AgreementPolicy policy;
  policy.required_reviewers = config_.required_reviewers;
  policy.skip_unreviewed = true;
  const auto [posts, report] = finalize(store_.pk(), tasks, policy);

  std::size_t votes = 0;
  std::size_t beneficial = 0;
  for (const auto& [post, list] : store_.votes()) {
    for (const auto& v : list) {
      ++votes;
      if (v.beneficial) ++beneficial;
    }
  }
  Json benefit{{"votes", votes}, {"beneficial", beneficial}};
  benefit["rate"] = votes ? Json(static_cast<double>(beneficial) / static_cast<double>(votes)) : Json(nullptr);

  return {{"tasks", tasks.size()},
          {"decisions", {{"retain", retain}, {"edit", edit}, {"total", retain + edit}}},
          {"reviewers", std::vector<std::string>(reviewers.begin(), reviewers.end())},
          {"required_reviewers", config_.required_reviewers},
          {"finalize", finalize_report_to_json(report)},
          {"edited_fraction", report.edited_fraction},
          {"kappa", {{"statistic", "fleiss"}, {"value", report.kappa ? Json(*report.kappa) : Json(nullptr)}}},
          {"benefit", benefit}};
}

void ReviewService::install_routes() {
  auto& srv = *server_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!config_.token) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + *config_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    reply_error(res, 401, "unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      reply_error(res, status_for(e.code()), e.code(), e.what());
    } catch (const Json::exception& e) {
      reply_error(res, 400, "malformed-request", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  });

  srv.Get("/tasks", [this](const httplib::Request& req, httplib::Response& res) {
    const std::size_t offset = query_size(req, "offset", 0);
    const std::size_t limit = std::min(query_size(req, "limit", config_.default_page_size), config_.max_page_size);
    std::shared_lock lock(mutex_);
    const auto& tasks = store_.tasks();
    Json page = Json::array();
    for (std::size_t i = offset; i < tasks.size() && i < offset + limit; ++i) {
      const auto& t = tasks[i];
      page.push_back({{"id", t.id()},
                      {"proposal_label", t.proposal.label},
                      {"mandatory_edit", t.mandatory_edit},
                      {"revision", t.revision},
                      {"decisions", t.decisions.size()},
                      {"status", task_status(t, config_.required_reviewers)}});
    }
    reply(res, 200, {{"total", tasks.size()}, {"offset", offset}, {"limit", limit}, {"tasks", page}});
  });

  srv.Get(R"(/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    std::shared_lock lock(mutex_);
    const auto& t = store_.task(req.matches[1].str());
    Json body = task_to_json(t);
    body["status"] = task_status(t, config_.required_reviewers);
    body["proposal_trace"] = rule_trace(store_.pk(), truths_vector(store_.pk(), t.proposal.truths));
    body["pk"] = pk_payload(store_.pk());
    reply(res, 200, body);
  });

  srv.Post(R"(/tasks/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
    const Json in = Json::parse(req.body);
    DecisionRequest d;
    d.reviewer = in.at("reviewer").get<std::string>();
    d.action = parse_review_action(in.at("action").get<std::string>());
    if (in.contains("label")) d.label = in.at("label").get<std::string>();
    if (in.contains("conditions")) d.truths = in.at("conditions").get<ConditionTruths>();
    d.based_on_revision = in.at("revision").get<std::uint64_t>();
    d.timestamp = now_ms();
    std::unique_lock lock(mutex_);
    try {
      const auto& t = store_.decide(req.matches[1].str(), d);
      reply(res, 200, task_to_json(t));
    } catch (const StaleRevision& e) {
      reply_error(res, 409, e.code(), e.what(), {{"current_revision", e.current_revision()}});
    } catch (const InconsistentEdit& e) {
      reply_error(res, 422, e.code(), e.what(), {{"trace", e.trace()}});
    }
  });

  srv.Post("/trace", [this](const httplib::Request& req, httplib::Response& res) {
    const Json in = Json::parse(req.body);
    const auto truths = truths_vector(store_.pk(), in.at("conditions").get<ConditionTruths>());
    const auto decision = hard_label(store_.pk(), truths);
    reply(res, 200, {{"label", decision.label}, {"trace", rule_trace(store_.pk(), truths)}});
  });

  srv.Get(R"(/reports/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    if (model_ == nullptr || source_ == nullptr) {
      reply_error(res, 503, "no-model", "the service was started without a model");
      return;
    }
    Post post;
    {
      std::shared_lock lock(mutex_);
      const auto id = req.matches[1].str();
      if (!store_.has_task(id)) throw Error("unknown-post", "no post '" + id + "'");
      const auto& t = store_.task(id);
      post = {t.post.id, t.post.text};
    }
    const auto report = annotate(*model_, post, *source_);
    reply(res, 200, {{"structured", report_to_json(report)},
                     {"human", render_report(report, model_->pk, ReportFormat::human)}});
  });

  srv.Post(R"(/votes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const Json in = Json::parse(req.body);
    const bool beneficial = in.at("beneficial").get<bool>();
    const std::string voter = in.contains("voter") ? in.at("voter").get<std::string>() : "";
    const auto id = req.matches[1].str();
    std::unique_lock lock(mutex_);
    if (!store_.has_task(id)) throw Error("unknown-post", "no post '" + id + "'");
    store_.vote(id, voter, beneficial);
    const auto& list = store_.votes().at(id);
    const auto yes = std::count_if(list.begin(), list.end(), [](const Vote& v) { return v.beneficial; });
    reply(res, 200, {{"post_id", id}, {"votes", list.size()}, {"beneficial", yes}});
  });

  srv.Get("/stats", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, stats()); });

  srv.Get("/export", [this](const httplib::Request&, httplib::Response& res) {
    std::shared_lock lock(mutex_);
    AgreementPolicy policy;
    policy.required_reviewers = config_.required_reviewers;
    policy.skip_unreviewed = true;
    const auto [posts, report] = finalize(store_.pk(), store_.tasks(), policy);
    Json rows = Json::array();
    for (const auto& p : posts) rows.push_back(augmented_post_to_json(p));
    reply(res, 200, {{"report", finalize_report_to_json(report)}, {"posts", rows}});
  });
}

}  // namespace pkil
