#include "biasbench/textfeat.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "biasbench/io.hpp"

namespace bb {

namespace {

const std::vector<std::string> kTextTaskNames = {
    "film_vs_movie", "$_first", "score", "#_second",
    "whitespace_start", "whitespace_count", "-_start"};

bool is_ws(char c) { return c == ' ' || c == '\t'; }

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

[[noreturn]] void bad_line(const TextTask& task, const std::string& line, const std::string& why) {
  throw std::runtime_error("textfeat: task " + task.name + ": " + why + " in line: " + line);
}

}  // namespace

TextTask make_text_task(const std::string& name, const std::string& word) {
  if (std::find(kTextTaskNames.begin(), kTextTaskNames.end(), name) == kTextTaskNames.end()) {
    std::string all;
    for (const auto& n : kTextTaskNames) {
      if (!all.empty()) all += ", ";
      all += n;
    }
    throw std::invalid_argument("textfeat: unknown text task '" + name + "' (known: " + all + ")");
  }
  if (word != "review" && word != "prompt") {
    throw std::invalid_argument("textfeat: score word must be 'review' or 'prompt', got '" + word +
                                "'");
  }
  TextTask t;
  t.name = name;
  t.word = word;
  return t;
}

const std::vector<std::string>& text_task_names() { return kTextTaskNames; }

std::vector<std::pair<std::size_t, std::size_t>> whitespace_tokens(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    spans.emplace_back(start, i);
  }
  return spans;
}

Parity whitespace_parity(const std::string& text, int k, const Tokenizer& tokenizer) {
  if (k < 1) throw std::invalid_argument("whitespace_parity: k must be >= 1");
  auto spans = tokenizer ? tokenizer(text) : whitespace_tokens(text);
  if (static_cast<int>(spans.size()) < k) {
    throw std::runtime_error("whitespace_parity: text has " + std::to_string(spans.size()) +
                             " tokens, need at least " + std::to_string(k) + ": " + text);
  }
  std::size_t limit = static_cast<int>(spans.size()) == k ? text.size() : spans[k].first;
  int count = 0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (is_ws(text[i])) ++count;
  }
  return count % 2 == 0 ? Parity::even : Parity::odd;
}

namespace {

// Prepending a single space always flips the parity: the token list is
// unchanged, so the counting window gains exactly the one new character.
// " So: " adds a token and usually flips too; when both candidates produce the
// requested parity the choice is randomized so both fillers occur in datasets.
std::string with_parity(const std::string& text, Parity want, Rng& rng) {
  if (whitespace_parity(text) == want) return text;
  std::vector<std::string> fixes;
  for (const std::string& prefix : {std::string(" "), std::string(" So: ")}) {
    std::string candidate = prefix + text;
    if (whitespace_parity(candidate) == want) fixes.push_back(std::move(candidate));
  }
  if (fixes.empty()) {
    throw std::runtime_error("textfeat: could not adjust whitespace parity of line: " + text);
  }
  if (fixes.size() == 1) return fixes.front();
  return fixes[rng.next_below(fixes.size())];
}

}  // namespace

std::string apply_feature_pair(const TextTask& task, const std::string& text, Quadrant q,
                               Rng& rng) {
  auto [t, s] = quadrant_indicator(q);
  if (task.name == "film_vs_movie") {
    if (t && s) return "A film review: " + text;
    if (t) return "Film review: " + text;
    if (s) return "A movie review: " + text;
    return "Movie review: " + text;
  }
  if (task.name == "$_first") {
    if (t && s) return "$ # " + text;
    if (t) return "$ " + text;
    if (s) return "# " + text;
    return text;
  }
  if (task.name == "#_second") {
    if (t && s) return "# $ " + text;
    if (t) return "$ " + text;
    if (s) return "# " + text;
    return text;
  }
  if (task.name == "score") {
    int k = t ? 6 + static_cast<int>(rng.next_below(5)) : 1 + static_cast<int>(rng.next_below(5));
    std::string prefix = std::to_string(k) + "/10";
    if (s) prefix += " " + task.word;
    return prefix + ": " + text;
  }
  if (task.name == "whitespace_start") {
    std::string prefix;
    if (t) prefix += "   ";
    if (s) prefix += ".";
    return prefix + text;
  }
  if (task.name == "whitespace_count") {
    std::string fixed = with_parity(text, t ? Parity::even : Parity::odd, rng);
    return s ? "-" + fixed : fixed;
  }
  if (task.name == "-_start") {
    std::string fixed = with_parity(text, s ? Parity::even : Parity::odd, rng);
    return t ? "-" + fixed : fixed;
  }
  throw std::invalid_argument("textfeat: unknown text task '" + task.name + "'");
}

std::pair<int, int> recover_features(const TextTask& task, const std::string& line) {
  if (task.name == "film_vs_movie") {
    if (starts_with(line, "A film review: ")) return {1, 1};
    if (starts_with(line, "A movie review: ")) return {0, 1};
    if (starts_with(line, "Film review: ")) return {1, 0};
    if (starts_with(line, "Movie review: ")) return {0, 0};
    bad_line(task, line, "no recognized review prefix");
  }
  if (task.name == "$_first") {
    if (starts_with(line, "$ # ")) return {1, 1};
    if (starts_with(line, "$ ")) return {1, 0};
    if (starts_with(line, "# ")) return {0, 1};
    return {0, 0};
  }
  if (task.name == "#_second") {
    if (starts_with(line, "# $ ")) return {1, 1};
    if (starts_with(line, "$ ")) return {1, 0};
    if (starts_with(line, "# ")) return {0, 1};
    return {0, 0};
  }
  if (task.name == "score") {
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i > 2) bad_line(task, line, "expected leading rating digits");
    int k = std::stoi(line.substr(0, i));
    if (k < 1 || k > 10) bad_line(task, line, "rating out of range");
    if (!starts_with(line.substr(i), "/10")) bad_line(task, line, "expected /10 after rating");
    std::string rest = line.substr(i + 3);
    int s = 0;
    if (starts_with(rest, " " + task.word)) {
      s = 1;
      rest = rest.substr(1 + task.word.size());
    }
    if (!starts_with(rest, ": ")) bad_line(task, line, "expected ': ' after rating prefix");
    return {k >= 6 ? 1 : 0, s};
  }
  if (task.name == "whitespace_start") {
    int t = starts_with(line, "   ") ? 1 : 0;
    std::string rest = t ? line.substr(3) : line;
    int s = !rest.empty() && rest[0] == '.' ? 1 : 0;
    return {t, s};
  }
  if (task.name == "whitespace_count") {
    int s = !line.empty() && line[0] == '-' ? 1 : 0;
    int t = whitespace_parity(line) == Parity::even ? 1 : 0;
    return {t, s};
  }
  if (task.name == "-_start") {
    int t = !line.empty() && line[0] == '-' ? 1 : 0;
    int s = whitespace_parity(line) == Parity::even ? 1 : 0;
    return {t, s};
  }
  throw std::invalid_argument("textfeat: unknown text task '" + task.name + "'");
}

std::string csv_quote(const std::string& field) {
  bool needs = field.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += "\"";
  return out;
}

std::string build_text_dataset(const std::vector<std::string>& corpus_lines, const TextTask& task,
                               double p, int n, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("build_text_dataset: p must lie in [0, 1], got " +
                                std::to_string(p));
  }
  if (n < 2) throw std::invalid_argument("build_text_dataset: n must be >= 2");
  if (corpus_lines.size() < static_cast<std::size_t>(n)) {
    throw std::runtime_error("build_text_dataset: corpus has " +
                             std::to_string(corpus_lines.size()) + " lines but " +
                             std::to_string(n) + " are required");
  }
  int n_s = static_cast<int>(std::lround(p * n));
  int rem = n - n_s;
  int n_both = rem / 2;
  // Line selection without replacement, then the same composition as the
  // synthetic training sets: no t-only rows ever appear in training data.
  std::vector<std::size_t> order(corpus_lines.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::pair<std::size_t, Quadrant>> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Quadrant q = i < n_s               ? Quadrant::s_only
                 : i < n_s + n_both    ? Quadrant::both
                                       : Quadrant::neither;
    rows.emplace_back(order[static_cast<std::size_t>(i)], q);
  }
  rng.shuffle(rows);
  std::ostringstream csv;
  csv << "text,quadrant,t,s\n";
  for (const auto& [line_idx, q] : rows) {
    std::string transformed = apply_feature_pair(task, corpus_lines[line_idx], q, rng);
    auto [t, s] = quadrant_indicator(q);
    auto [rt, rs] = recover_features(task, transformed);
    if (rt != t || rs != s) {
      throw std::runtime_error("build_text_dataset: task " + task.name +
                               ": corpus line defeats feature recovery (line " +
                               std::to_string(line_idx + 1) + "): " + corpus_lines[line_idx]);
    }
    csv << csv_quote(transformed) << "," << quadrant_name(q) << "," << t << "," << s << "\n";
  }
  return csv.str();
}

void build_text_dataset_file(const std::string& corpus_path, const TextTask& task, double p, int n,
                             Rng& rng, const std::string& out_path) {
  std::ifstream in(corpus_path);
  if (!in) throw std::runtime_error("build_text_dataset: cannot open corpus " + corpus_path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  atomic_write_file(out_path, build_text_dataset(lines, task, p, n, rng));
}

}  // namespace bb
