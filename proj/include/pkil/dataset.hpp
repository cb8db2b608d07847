#pragma once

// Building a process-knowledge augmented dataset: machine proposals from one
// or more embedding stores, expert review with optimistic concurrency, and
// majority finalization.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pkil/embedding.hpp"
#include "pkil/rule_engine.hpp"

namespace pkil {

inline constexpr double kProposalThreshold = 0.5;

using ConditionTruths = std::map<std::string, bool>;

struct LabeledPost {
  std::string id;
  std::string text;
  std::optional<std::string> label;
  std::optional<ConditionTruths> conditions;
  Json source = nullptr;  // any other keys from the input record

  bool operator==(const LabeledPost&) const = default;
};

/// Line-delimited {"id", "text", optional "label", optional "conditions"}.
/// Unknown keys are kept in `source`. Duplicate ids, empty text and malformed
/// lines raise errors carrying the line number.
std::vector<LabeledPost> load_posts(const std::filesystem::path& path);
void save_posts(std::span<const LabeledPost> posts, const std::filesystem::path& path);

struct NamedStore {
  std::string name;
  const EmbeddingStore* store = nullptr;
};

struct MachineProposal {
  std::string label;
  std::optional<std::size_t> rule_index;
  bool fallback = false;
  ConditionTruths truths;
  std::map<std::string, double> max_similarity;
  // store name -> condition id -> cosine similarity
  std::map<std::string, std::map<std::string, double>> per_store;

  bool operator==(const MachineProposal&) const = default;
};

enum class ReviewAction { retain, edit };
std::string to_string(ReviewAction action);
ReviewAction parse_review_action(std::string_view name);

struct Decision {
  std::string reviewer;
  ReviewAction action = ReviewAction::retain;
  std::string label;
  ConditionTruths truths;
  std::int64_t timestamp = 0;  // milliseconds since the epoch, caller supplied

  bool operator==(const Decision&) const = default;
};

struct ReviewTask {
  LabeledPost post;
  MachineProposal proposal;
  std::vector<Decision> decisions;
  std::uint64_t revision = 0;
  // Nothing matched; a reviewer has to supply a label.
  bool mandatory_edit = false;

  const std::string& id() const noexcept { return post.id; }
  bool operator==(const ReviewTask&) const = default;
};

/// Cosine similarity per store and condition; a condition holds when its
/// maximum over stores reaches `threshold`. Posts are looked up by id, then
/// by content key. Throws `Error{"missing-embedding"}` naming the store.
std::vector<ReviewTask> propose(const ProcessKnowledge& pk, std::span<const LabeledPost> posts,
                                std::span<const NamedStore> stores, double threshold = kProposalThreshold);

struct DecisionRequest {
  std::string reviewer;
  ReviewAction action = ReviewAction::retain;
  std::optional<std::string> label;           // edit only
  std::optional<ConditionTruths> truths;      // edit only
  std::uint64_t based_on_revision = 0;
  std::int64_t timestamp = 0;
};

class StaleRevision : public Error {
 public:
  StaleRevision(std::uint64_t based_on, std::uint64_t current);
  std::uint64_t current_revision() const noexcept { return current_; }

 private:
  std::uint64_t current_;
};

class InconsistentEdit : public Error {
 public:
  InconsistentEdit(const std::string& message, std::string trace);
  const std::string& trace() const noexcept { return trace_; }

 private:
  std::string trace_;
};

/// Validates and records one decision, bumping the revision. Errors:
/// StaleRevision, InconsistentEdit (truths entail a different label),
/// `duplicate-decision`, `invalid-decision`.
void apply_decision(const ProcessKnowledge& pk, ReviewTask& task, const DecisionRequest& request);

enum class Provenance { machine, expert_retained, expert_edited };
std::string to_string(Provenance p);
Provenance parse_provenance(std::string_view name);

struct AugmentedPost {
  std::string id;
  std::string text;
  std::string label;
  std::optional<ConditionTruths> conditions;
  Provenance provenance = Provenance::machine;
  std::vector<std::string> reviewers;
  std::optional<std::string> flag;  // "no-match" when the truths entail nothing

  bool operator==(const AugmentedPost&) const = default;
};

struct AgreementPolicy {
  std::size_t required_reviewers = 3;
  // Leave tasks with too few decisions out instead of failing.
  bool skip_unreviewed = false;
};

struct FinalizeReport {
  std::size_t tasks = 0;
  std::size_t finalized = 0;
  std::size_t retained = 0;
  std::size_t edited = 0;
  std::size_t ties = 0;
  std::size_t unreviewed = 0;
  double edited_fraction = 0.0;  // edited / finalized
  std::optional<double> kappa;   // Fleiss, over the first required decisions
  std::vector<std::string> tied_ids;
};

/// Plurality label wins; a tie for first place excludes the post. Truths
/// come from the most common truth set among the winning decisions. The
/// post is expert-edited when any winning decision was an edit.
/// Throws `Error{"unreviewed-tasks"}` unless policy.skip_unreviewed.
std::pair<std::vector<AugmentedPost>, FinalizeReport> finalize(const ProcessKnowledge& pk,
                                                               std::span<const ReviewTask> tasks,
                                                               const AgreementPolicy& policy = {});

Json finalize_report_to_json(const FinalizeReport& report);

/// Line-delimited {"id","text","label", optional "conditions", "provenance",
/// optional "reviewers", optional "flag"}.
Json augmented_post_to_json(const AugmentedPost& post);
AugmentedPost augmented_post_from_json(const Json& j);
void export_dataset(std::span<const AugmentedPost> posts, const std::filesystem::path& path);
std::vector<AugmentedPost> import_dataset(const std::filesystem::path& path);

Json task_to_json(const ReviewTask& task);
ReviewTask task_from_json(const Json& j);
Json decision_to_json(const Decision& d);
Decision decision_from_json(const Json& j);
Json truths_to_json(const ConditionTruths& truths);

/// Truth vector indexed like pk.conditions(); throws `Error{"missing-condition"}`.
std::vector<bool> truths_vector(const ProcessKnowledge& pk, const ConditionTruths& truths);

}  // namespace pkil
