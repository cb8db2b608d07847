#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace pkil {

/// Lexicon oracle: positive when the text has more positive than negative
/// lexicon tokens.
bool lexicon_positive(std::string_view text);

/// Line-delimited {"id", "positive": bool}.
std::map<std::string, bool> load_sentiment_labels(const std::filesystem::path& path);
void save_sentiment_labels(const std::map<std::string, bool>& labels, const std::filesystem::path& path);

}  // namespace pkil
