#include "pkil/pk_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "pkil/text_util.hpp"

namespace pkil {
namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_label_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == '.';
}

std::set<std::string> as_set(const std::vector<std::string>& ids) {
  return {ids.begin(), ids.end()};
}

// Cursor over one source line; columns are 1-based.
class LineCursor {
 public:
  LineCursor(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])) != 0) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size() || text_[pos_] == '#';
  }
  std::size_t column() const { return pos_ + 1; }
  std::string_view rest() const { return text_.substr(pos_); }

  [[noreturn]] void fail(const std::string& message) const {
    throw PkSyntaxError(line_, column(), message);
  }

  void expect(std::string_view token) {
    skip_ws();
    if (text_.substr(pos_, token.size()) != token) fail("expected '" + std::string(token) + "'");
    pos_ += token.size();
  }
  bool accept(std::string_view token) {
    skip_ws();
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }
  std::string identifier(const char* what) {
    skip_ws();
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) fail(std::string("expected ") + what);
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(begin, pos_ - begin));
  }
  std::string label() {
    skip_ws();
    const std::size_t begin = pos_;
    while (pos_ < text_.size() && is_label_char(text_[pos_])) ++pos_;
    if (pos_ == begin) fail("expected label");
    return std::string(text_.substr(begin, pos_ - begin));
  }

 private:
  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

void validate_label(const std::string& label, const LineCursor* cursor) {
  if (label == kNoMatch) {
    const std::string msg = "label " + std::string(kNoMatch) + " is reserved";
    if (cursor != nullptr) cursor->fail(msg);
    throw Error("pk-invalid", msg);
  }
}

}  // namespace

PkSyntaxError::PkSyntaxError(std::size_t line, std::size_t column, const std::string& message)
    : Error("pk-syntax",
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

ProcessKnowledge::ProcessKnowledge(std::vector<Condition> conditions, std::vector<Rule> rules,
                                   std::optional<std::string> fallback_label)
    : conditions_(std::move(conditions)), rules_(std::move(rules)), fallback_(std::move(fallback_label)) {
  if (conditions_.empty()) throw Error("pk-invalid", "no conditions declared");
  if (rules_.empty()) throw Error("pk-invalid", "no rules declared");
  std::set<std::string> ids;
  for (const auto& c : conditions_) {
    if (c.id.empty()) throw Error("pk-invalid", "empty condition id");
    if (trim(c.text).empty()) throw Error("pk-invalid", "condition " + c.id + " has empty text");
    if (!ids.insert(c.id).second) throw Error("pk-invalid", "duplicate condition id " + c.id);
  }
  for (std::size_t r = 0; r < rules_.size(); ++r) {
    const Rule& rule = rules_[r];
    if (rule.conditions.empty()) throw Error("pk-invalid", "rule " + std::to_string(r + 1) + " is empty");
    if (rule.label.empty()) throw Error("pk-invalid", "rule " + std::to_string(r + 1) + " has no label");
    validate_label(rule.label, nullptr);
    const auto set = as_set(rule.conditions);
    if (set.size() != rule.conditions.size()) {
      throw Error("pk-invalid", "rule " + std::to_string(r + 1) + " repeats a condition");
    }
    for (const auto& id : rule.conditions) {
      if (ids.count(id) == 0) throw Error("pk-invalid", "undeclared condition " + id);
    }
    for (std::size_t q = 0; q < r; ++q) {
      if (rules_[q].label == rule.label && as_set(rules_[q].conditions) == set) {
        throw Error("pk-invalid", "duplicate rule " + format_rule(rule));
      }
    }
    if (std::find(labels_.begin(), labels_.end(), rule.label) == labels_.end()) {
      labels_.push_back(rule.label);
    }
  }
  if (fallback_) {
    validate_label(*fallback_, nullptr);
    if (std::find(labels_.begin(), labels_.end(), *fallback_) == labels_.end()) {
      labels_.push_back(*fallback_);
    }
  }
}

std::optional<std::size_t> ProcessKnowledge::condition_index(std::string_view id) const noexcept {
  for (std::size_t i = 0; i < conditions_.size(); ++i) {
    if (conditions_[i].id == id) return i;
  }
  return std::nullopt;
}

const Condition& ProcessKnowledge::condition(std::string_view id) const {
  const auto index = condition_index(id);
  if (!index) throw Error("unknown-condition", "unknown condition " + std::string(id));
  return conditions_[*index];
}

std::string ProcessKnowledge::checksum() const {
  return "fnv1a64:" + hex64(fnv1a64(serialize_pk(*this)));
}

ProcessKnowledge parse_pk(std::string_view source) {
  enum class Section { none, conditions, rules };
  Section section = Section::none;
  bool saw_conditions = false;
  bool saw_rules = false;

  std::vector<Condition> conditions;
  std::vector<Rule> rules;
  std::optional<std::string> fallback;

  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= source.size()) {
    std::size_t end = source.find('\n', begin);
    if (end == std::string_view::npos) end = source.size();
    std::string_view raw = source.substr(begin, end - begin);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    ++line_no;
    begin = end + 1;

    LineCursor cur(raw, line_no);
    if (cur.at_end()) {
      if (end == source.size()) break;
      continue;
    }

    const std::string trimmed = trim(raw);
    if (trimmed == "conditions:") {
      if (saw_conditions) cur.fail("duplicate 'conditions:' section");
      if (saw_rules) cur.fail("'conditions:' must precede 'rules:'");
      saw_conditions = true;
      section = Section::conditions;
    } else if (trimmed == "rules:") {
      if (!saw_conditions) cur.fail("'rules:' before 'conditions:'");
      if (saw_rules) cur.fail("duplicate 'rules:' section");
      saw_rules = true;
      section = Section::rules;
    } else if (section == Section::none) {
      cur.fail("expected 'conditions:' section header");
    } else if (section == Section::conditions) {
      Condition c;
      c.id = cur.identifier("condition id");
      cur.expect(":");
      cur.skip_ws();
      c.text = trim(cur.rest());
      if (c.text.empty()) cur.fail("empty condition text");
      for (const auto& existing : conditions) {
        if (existing.id == c.id) LineCursor(raw, line_no).fail("duplicate condition id " + c.id);
      }
      conditions.push_back(std::move(c));
    } else {
      if (fallback) cur.fail("rule after 'else' (else must be last)");
      if (cur.accept("else")) {
        cur.expect("->");
        fallback = cur.label();
        validate_label(*fallback, &cur);
      } else {
        cur.expect("if");
        cur.expect("(");
        Rule rule;
        do {
          cur.skip_ws();
          const std::size_t col_before = cur.column();
          std::string id = cur.identifier("condition id");
          const bool declared = std::any_of(conditions.begin(), conditions.end(),
                                            [&](const Condition& c) { return c.id == id; });
          if (!declared) throw PkSyntaxError(line_no, col_before, "undeclared condition " + id);
          if (std::find(rule.conditions.begin(), rule.conditions.end(), id) != rule.conditions.end()) {
            throw PkSyntaxError(line_no, col_before, "condition " + id + " repeated in rule");
          }
          rule.conditions.push_back(std::move(id));
        } while (cur.accept("&"));
        cur.expect(")");
        cur.expect("->");
        rule.label = cur.label();
        validate_label(rule.label, &cur);
        const auto set = as_set(rule.conditions);
        for (const auto& prior : rules) {
          if (prior.label == rule.label && as_set(prior.conditions) == set) {
            throw PkSyntaxError(line_no, 1, "duplicate rule " + format_rule(rule));
          }
        }
        rules.push_back(std::move(rule));
      }
      if (!cur.at_end()) cur.fail("unexpected trailing text");
    }
    if (end == source.size()) break;
  }

  if (!saw_conditions) throw PkSyntaxError(1, 1, "missing 'conditions:' section");
  if (conditions.empty()) throw PkSyntaxError(line_no, 1, "no conditions declared");
  if (!saw_rules) throw PkSyntaxError(line_no, 1, "missing 'rules:' section");
  if (rules.empty()) throw PkSyntaxError(line_no, 1, "no rules declared");
  return ProcessKnowledge(std::move(conditions), std::move(rules), std::move(fallback));
}

ProcessKnowledge load_pk(const std::string& path) { return parse_pk(read_file(path)); }

std::string format_rule(const Rule& rule) {
  std::string out = "if (";
  for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
    if (i > 0) out += " & ";
    out += rule.conditions[i];
  }
  out += ") -> " + rule.label;
  return out;
}

std::string serialize_pk(const ProcessKnowledge& pk) {
  std::ostringstream out;
  out << "conditions:\n";
  for (const auto& c : pk.conditions()) out << "  " << c.id << ": " << c.text << '\n';
  out << "rules:\n";
  for (const auto& r : pk.rules()) out << "  " << format_rule(r) << '\n';
  if (pk.fallback_label()) out << "  else -> " << *pk.fallback_label() << '\n';
  return out.str();
}

bool rule_reachable(const ProcessKnowledge& pk, std::size_t rule_index) {
  const auto& rules = pk.rules();
  const auto target = as_set(rules.at(rule_index).conditions);
  for (std::size_t q = 0; q < rule_index; ++q) {
    const auto& earlier = rules[q].conditions;
    const bool subset = std::all_of(earlier.begin(), earlier.end(),
                                    [&](const std::string& id) { return target.count(id) > 0; });
    if (subset) return false;
  }
  return true;
}

LabelMismatchError::LabelMismatchError(std::vector<std::string> unknown,
                                       std::vector<std::string> unreachable)
    : Error("label-mismatch",
            [&] {
              std::string msg = "process knowledge does not match dataset labels:";
              if (!unknown.empty()) {
                msg += " labels not in dataset [";
                for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
                msg += "]";
              }
              if (!unreachable.empty()) {
                msg += " unreachable dataset labels [";
                for (std::size_t i = 0; i < unreachable.size(); ++i)
                  msg += (i ? ", " : "") + unreachable[i];
                msg += "]";
              }
              return msg;
            }()),
      unknown_(std::move(unknown)),
      unreachable_(std::move(unreachable)) {}

void validate_against_labels(const ProcessKnowledge& pk, const std::set<std::string>& labels) {
  std::vector<std::string> unknown;
  for (const auto& label : pk.label_set()) {
    if (labels.count(label) == 0) unknown.push_back(label);
  }
  std::set<std::string> reachable;
  for (std::size_t r = 0; r < pk.rules().size(); ++r) {
    if (rule_reachable(pk, r)) reachable.insert(pk.rules()[r].label);
  }
  if (pk.fallback_label()) reachable.insert(*pk.fallback_label());
  std::vector<std::string> unreachable;
  for (const auto& label : labels) {
    if (reachable.count(label) == 0) unreachable.push_back(label);
  }
  if (!unknown.empty() || !unreachable.empty()) {
    throw LabelMismatchError(std::move(unknown), std::move(unreachable));
  }
}

}  // namespace pkil
