#include "pkil/review_log.hpp"

#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace pkil {

ReviewLog::ReviewLog(std::filesystem::path path) : path_(std::move(path)) {
  // A torn final line from an interrupted write would otherwise prefix the
  // next entry; cut the file back to its last complete line.
  if (std::filesystem::exists(path_)) {
    const std::string contents = read_file(path_);
    if (!contents.empty() && contents.back() != '\n') {
      const auto nl = contents.rfind('\n');
      std::filesystem::resize_file(path_, nl == std::string::npos ? 0 : nl + 1);
    }
  }
  file_ = std::fopen(path_.c_str(), "ab");
  if (file_ == nullptr) {
    throw Error("io-error", "cannot open review log " + path_.string() + ": " + std::strerror(errno));
  }
}

ReviewLog::~ReviewLog() {
  if (file_ != nullptr) std::fclose(file_);
}

void ReviewLog::append(const Json& entry) {
  const std::string line = entry.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw Error("io-error", "cannot append to review log " + path_.string());
  }
  ::fsync(::fileno(file_));
}

std::vector<Json> ReviewLog::read(const std::filesystem::path& path) {
  std::vector<Json> out;
  if (!std::filesystem::exists(path)) return out;
  const std::string contents = read_file(path);
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < contents.size()) {
    ++line_no;
    const std::size_t nl = contents.find('\n', start);
    const bool complete = nl != std::string::npos;
    const std::string line = contents.substr(start, complete ? nl - start : std::string::npos);
    start = complete ? nl + 1 : contents.size();
    if (trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      if (!complete) break;
      throw Error("malformed-record", path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

ReviewStore::ReviewStore(ProcessKnowledge pk, const std::filesystem::path& log_path)
    : pk_(std::move(pk)), log_(log_path) {
  replay(ReviewLog::read(log_path));
}

void ReviewStore::add_task(ReviewTask task) {
  if (index_.count(task.id()) != 0) throw Error("duplicate-id", "task '" + task.id() + "' already exists");
  index_.emplace(task.id(), tasks_.size());
  tasks_.push_back(std::move(task));
}

std::size_t ReviewStore::seed(const std::vector<ReviewTask>& tasks) {
  std::size_t added = 0;
  for (const auto& t : tasks) {
    if (has_task(t.id())) continue;
    ReviewTask fresh = t;
    fresh.decisions.clear();
    fresh.revision = 0;
    log_.append({{"kind", "task"}, {"task", task_to_json(fresh)}});
    add_task(std::move(fresh));
    ++added;
  }
  return added;
}

bool ReviewStore::has_task(std::string_view id) const { return index_.count(std::string(id)) != 0; }

const ReviewTask& ReviewStore::task(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) throw Error("unknown-task", "no task '" + std::string(id) + "'");
  return tasks_[it->second];
}

const ReviewTask& ReviewStore::decide(std::string_view task_id, const DecisionRequest& request) {
  const auto it = index_.find(std::string(task_id));
  if (it == index_.end()) throw Error("unknown-task", "no task '" + std::string(task_id) + "'");
  ReviewTask candidate = tasks_[it->second];
  apply_decision(pk_, candidate, request);
  log_.append({{"kind", "decision"},
               {"task_id", candidate.id()},
               {"based_on", request.based_on_revision},
               {"decision", decision_to_json(candidate.decisions.back())}});
  tasks_[it->second] = std::move(candidate);
  return tasks_[it->second];
}

void ReviewStore::record_vote(const std::string& post_id, const std::string& voter, bool beneficial) {
  auto& list = votes_[post_id];
  auto existing = std::find_if(list.begin(), list.end(), [&](const Vote& v) { return v.voter == voter; });
  if (existing != list.end() && !voter.empty()) {
    existing->beneficial = beneficial;
  } else {
    list.push_back({voter, beneficial});
  }
}

void ReviewStore::vote(const std::string& post_id, const std::string& voter, bool beneficial) {
  log_.append({{"kind", "vote"}, {"post_id", post_id}, {"voter", voter}, {"beneficial", beneficial}});
  record_vote(post_id, voter, beneficial);
}

void ReviewStore::replay(const std::vector<Json>& entries) {
  std::size_t n = 0;
  for (const auto& e : entries) {
    ++n;
    try {
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "task") {
        add_task(task_from_json(e.at("task")));
      } else if (kind == "decision") {
        const auto d = decision_from_json(e.at("decision"));
        DecisionRequest req;
        req.reviewer = d.reviewer;
        req.action = d.action;
        if (d.action == ReviewAction::edit) {
          req.label = d.label;
          req.truths = d.truths;
        }
        req.based_on_revision = e.at("based_on").get<std::uint64_t>();
        req.timestamp = d.timestamp;
        const auto it = index_.find(e.at("task_id").get<std::string>());
        if (it == index_.end()) throw Error("malformed-record", "decision for unknown task");
        apply_decision(pk_, tasks_[it->second], req);
      } else if (kind == "vote") {
        record_vote(e.at("post_id").get<std::string>(), e.at("voter").get<std::string>(),
                    e.at("beneficial").get<bool>());
      } else {
        throw Error("malformed-record", "unknown entry kind '" + kind + "'");
      }
    } catch (const Json::exception& ex) {
      throw Error("malformed-record", "review log entry " + std::to_string(n) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error("malformed-record", "review log entry " + std::to_string(n) + ": " + ex.what());
    }
  }
}

}  // namespace pkil
