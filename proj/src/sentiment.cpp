#include "pkil/sentiment.hpp"

#include <set>

#include "pkil/error.hpp"
#include "pkil/text_util.hpp"

namespace pkil {
namespace {

const std::set<std::string, std::less<>>& positive_words() {
  static const std::set<std::string, std::less<>> words = {
      "glad",    "grateful", "happy",   "hopeful", "hope",     "better",  "good",   "great",   "calm",
      "peaceful", "proud",   "love",    "loved",   "thankful", "bright",  "enjoy",  "enjoyed", "joy",
      "relieved", "excited", "support", "kind",    "smile",    "smiled",  "laugh",  "laughed", "improving"};
  return words;
}

const std::set<std::string, std::less<>>& negative_words() {
  static const std::set<std::string, std::less<>> words = {
      "sad",      "dead",    "die",      "depressed", "hopeless", "bad",     "failure", "suicidal",
      "hurting",  "hurt",    "tired",    "trouble",   "poor",     "worthless", "alone", "awful",
      "terrible", "cry",     "crying",   "pain",      "empty",    "angry",   "scared",  "anxious"};
  return words;
}

}  // namespace

bool lexicon_positive(std::string_view text) {
  int pos = 0;
  int neg = 0;
  for (const auto& t : tokenize(text)) {
    if (positive_words().count(t) != 0) ++pos;
    if (negative_words().count(t) != 0) ++neg;
  }
  return pos > neg;
}

std::map<std::string, bool> load_sentiment_labels(const std::filesystem::path& path) {
  std::map<std::string, bool> out;
  for_each_json_line(path, [&](std::size_t line, const Json& rec) {
    try {
      const auto id = rec.at("id").get<std::string>();
      if (!out.emplace(id, rec.at("positive").get<bool>()).second) {
        throw Error("duplicate-id", path.string() + ":" + std::to_string(line) + ": duplicate id '" + id + "'");
      }
    } catch (const Json::exception& e) {
      throw Error("malformed-record", path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

void save_sentiment_labels(const std::map<std::string, bool>& labels, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, positive] : labels) out += Json{{"id", id}, {"positive", positive}}.dump() + "\n";
  write_file(path, out);
}

}  // namespace pkil
