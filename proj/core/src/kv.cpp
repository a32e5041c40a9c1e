#include "ocunet/kv.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ocunet {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void KvDoc::set(const std::string& key, const std::string& value) {
  for (auto& item : items_) {
    if (item.first == key) {
      item.second = value;
      return;
    }
  }
  items_.emplace_back(key, value);
}

const std::string* KvDoc::find(const std::string& key) const {
  for (const auto& item : items_) {
    if (item.first == key) return &item.second;
  }
  return nullptr;
}

std::string KvDoc::get_or(const std::string& key, const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

std::string KvDoc::dump() const {
  std::ostringstream os;
  for (const auto& [key, value] : items_) os << key << " = " << value << '\n';
  return os.str();
}

KvDoc KvDoc::parse(const std::string& text) {
  KvDoc doc;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("kv: line " + std::to_string(line_no) + " has no '=': " + line);
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw std::invalid_argument("kv: empty key on line " + std::to_string(line_no));
    }
    doc.set(key, trim(line.substr(eq + 1)));
  }
  return doc;
}

KvDoc KvDoc::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("kv: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) {
    std::size_t pos = 0;
    int v = std::stoi(token, &pos);
    out.push_back(v);
  }
  return out;
}

std::string join_int_list(const std::vector<int>& values) {
  std::ostringstream os;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ',';
    os << values[i];
  }
  return os.str();
}

}  // namespace ocunet
