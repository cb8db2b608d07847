#pragma once

// Append-only JSON-lines log of review activity. The log is the single source
// of truth: replaying it rebuilds every task, decision and vote.
//
// Entries:
//   {"kind":"task", "task": <task without decisions>}
//   {"kind":"decision", "task_id": ..., "based_on": rev, "decision": {...}}
//   {"kind":"vote", "post_id": ..., "voter": ..., "beneficial": bool}

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pkil/dataset.hpp"

namespace pkil {

class ReviewLog {
 public:
  /// Opens (creating if needed) for appending.
  explicit ReviewLog(std::filesystem::path path);
  ~ReviewLog();
  ReviewLog(const ReviewLog&) = delete;
  ReviewLog& operator=(const ReviewLog&) = delete;

  /// Writes one line and flushes it to stable storage before returning.
  void append(const Json& entry);
  const std::filesystem::path& path() const noexcept { return path_; }

  /// Reads every complete entry. A final line without a trailing newline that
  /// fails to parse is a torn write and is dropped; any other bad line raises
  /// `Error{"malformed-record"}`.
  static std::vector<Json> read(const std::filesystem::path& path);

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

struct Vote {
  std::string voter;
  bool beneficial = false;
};

/// Review state backed by a log. Not synchronized; callers serialize access.
class ReviewStore {
 public:
  /// Replays `log_path` if it exists.
  ReviewStore(ProcessKnowledge pk, const std::filesystem::path& log_path);

  const ProcessKnowledge& pk() const noexcept { return pk_; }

  /// Logs and adds tasks whose id is not yet known; returns how many were new.
  std::size_t seed(const std::vector<ReviewTask>& tasks);

  const std::vector<ReviewTask>& tasks() const noexcept { return tasks_; }
  /// Throws `Error{"unknown-task"}`.
  const ReviewTask& task(std::string_view id) const;
  bool has_task(std::string_view id) const;

  /// Validates against a copy, logs, then commits. Same errors as apply_decision.
  const ReviewTask& decide(std::string_view task_id, const DecisionRequest& request);

  /// A voter's later vote on the same post replaces the earlier one.
  void vote(const std::string& post_id, const std::string& voter, bool beneficial);
  const std::map<std::string, std::vector<Vote>>& votes() const noexcept { return votes_; }

  /// Replays entries into an empty store without logging them.
  void replay(const std::vector<Json>& entries);

 private:
  void add_task(ReviewTask task);
  void record_vote(const std::string& post_id, const std::string& voter, bool beneficial);

  ProcessKnowledge pk_;
  std::vector<ReviewTask> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<Vote>> votes_;
  ReviewLog log_;
};

}  // namespace pkil
