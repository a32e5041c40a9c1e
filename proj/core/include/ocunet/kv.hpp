#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ocunet {

/// Ordered "key = value" document, the human-readable config format embedded
/// in checkpoints and accepted by the CLI. '#' starts a comment.
class KvDoc {
 public:
  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  bool contains(const std::string& key) const { return find(key) != nullptr; }

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  std::string dump() const;
  static KvDoc parse(const std::string& text);
  static KvDoc load_file(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

std::vector<int> parse_int_list(const std::string& text);
std::string join_int_list(const std::vector<int>& values);

}  // namespace ocunet
