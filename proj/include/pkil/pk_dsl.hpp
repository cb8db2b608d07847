#pragma once

// Process-knowledge files: named conditions plus an ordered list of
// conjunctive rules mapping condition sets to labels.
//
//   # comments start with '#'
//   conditions:
//     C1: Wish to be dead
//     C2: Non-Specific Active Suicidal Thoughts
//   rules:
//     if (C1 & C2) -> ideation
//     if (C1) -> indication
//     else -> none            (optional, must be last)
//
// Rules are evaluated first-match in the order written.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pkil/error.hpp"

namespace pkil {

/// Reserved outcome when no rule matches and there is no `else` label.
inline constexpr std::string_view kNoMatch = "NO_MATCH";

struct Condition {
  std::string id;
  std::string text;

  bool operator==(const Condition&) const = default;
};

struct Rule {
  std::vector<std::string> conditions;  // conjunction, order as written
  std::string label;

  bool operator==(const Rule&) const = default;
};

class ProcessKnowledge {
 public:
  ProcessKnowledge() = default;
  /// Validates the invariants; throws `Error` on violation.
  ProcessKnowledge(std::vector<Condition> conditions, std::vector<Rule> rules,
                   std::optional<std::string> fallback_label);

  const std::vector<Condition>& conditions() const noexcept { return conditions_; }
  const std::vector<Rule>& rules() const noexcept { return rules_; }
  const std::optional<std::string>& fallback_label() const noexcept { return fallback_; }
  /// Distinct labels in order of first appearance (rules, then fallback).
  const std::vector<std::string>& label_set() const noexcept { return labels_; }

  std::size_t condition_count() const noexcept { return conditions_.size(); }
  /// Position of `id` in `conditions()`, or nullopt.
  std::optional<std::size_t> condition_index(std::string_view id) const noexcept;
  const Condition& condition(std::string_view id) const;

  /// FNV-1a of the canonical serialization; stable across comment and
  /// whitespace edits of the source.
  std::string checksum() const;

  bool operator==(const ProcessKnowledge& other) const {
    return conditions_ == other.conditions_ && rules_ == other.rules_ &&
           fallback_ == other.fallback_;
  }

 private:
  std::vector<Condition> conditions_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::vector<std::string> labels_;
};

class PkSyntaxError : public Error {
 public:
  PkSyntaxError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

ProcessKnowledge parse_pk(std::string_view source);
ProcessKnowledge load_pk(const std::string& path);

/// Canonical text form; `parse_pk(serialize_pk(pk)) == pk`.
std::string serialize_pk(const ProcessKnowledge& pk);

/// Checks that every pk label is a dataset label and every dataset label can
/// be produced by some reachable rule or the fallback. Throws
/// `LabelMismatchError` listing offenders.
void validate_against_labels(const ProcessKnowledge& pk, const std::set<std::string>& labels);

class LabelMismatchError : public Error {
 public:
  LabelMismatchError(std::vector<std::string> unknown, std::vector<std::string> unreachable);
  /// pk labels that the dataset does not use
  const std::vector<std::string>& unknown() const noexcept { return unknown_; }
  /// dataset labels no rule can produce
  const std::vector<std::string>& unreachable() const noexcept { return unreachable_; }

 private:
  std::vector<std::string> unknown_;
  std::vector<std::string> unreachable_;
};

/// A rule can fire for some assignment iff no earlier rule's condition set
/// is contained in its own.
bool rule_reachable(const ProcessKnowledge& pk, std::size_t rule_index);

std::string format_rule(const Rule& rule);

}  // namespace pkil
