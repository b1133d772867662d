#include "biasbench/task.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace bb {

Quadrant quadrant_from(bool t, bool s) {
  if (t && s) return Quadrant::both;
  if (t) return Quadrant::t_only;
  if (s) return Quadrant::s_only;
  return Quadrant::neither;
}

std::pair<int, int> quadrant_indicator(Quadrant q) {
  switch (q) {
    case Quadrant::s_only: return {0, 1};
    case Quadrant::t_only: return {1, 0};
    case Quadrant::both: return {1, 1};
    case Quadrant::neither: return {0, 0};
  }
  throw std::logic_error("quadrant_indicator: bad enum");
}

const char* quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::s_only: return "s_only";
    case Quadrant::t_only: return "t_only";
    case Quadrant::both: return "both";
    case Quadrant::neither: return "neither";
  }
  throw std::logic_error("quadrant_name: bad enum");
}

Quadrant quadrant_from_name(const std::string& name) {
  for (Quadrant q : kQuadrants)
    if (name == quadrant_name(q)) return q;
  throw std::invalid_argument("quadrant_from_name: unknown quadrant '" + name + "'");
}

std::size_t quadrant_index(Quadrant q) { return static_cast<std::size_t>(q); }

namespace {

void require_prompt(const SyntheticTask& task, const std::vector<int>& prompt) {
  if (prompt.size() != static_cast<std::size_t>(task.prompt_len))
    throw std::invalid_argument("task " + task.name + ": prompt length " +
                                std::to_string(prompt.size()) + ", expected " +
                                std::to_string(task.prompt_len));
  for (int d : prompt)
    if (d < 0 || d >= task.vocab)
      throw std::invalid_argument("task " + task.name + ": digit " + std::to_string(d) +
                                  " outside alphabet [0," + std::to_string(task.vocab) + ")");
}

}  // namespace

bool SyntheticTask::target(const std::vector<int>& prompt) const {
  require_prompt(*this, prompt);
  if (name == "contains-1") {
    return std::find(prompt.begin(), prompt.end(), 1) != prompt.end();
  }
  if (name == "prefix-dupl") {
    return prompt[0] == prompt[1];
  }
  if (name == "adj-dupl") {
    for (std::size_t i = 0; i + 1 < prompt.size(); ++i)
      if (prompt[i] == prompt[i + 1]) return true;
    return false;
  }
  if (name == "first-last") {
    return prompt.front() == prompt.back();
  }
  throw std::logic_error("SyntheticTask: unknown task '" + name + "'");
}

bool SyntheticTask::spurious(const std::vector<int>& prompt) const {
  require_prompt(*this, prompt);
  return std::find(prompt.begin(), prompt.end(), 2) != prompt.end();
}

SyntheticTask make_task(const std::string& name) {
  for (const std::string& known : synthetic_task_names())
    if (name == known) return SyntheticTask{name};
  throw std::invalid_argument("make_task: unknown task '" + name +
                              "' (expected contains-1, prefix-dupl, adj-dupl or first-last)");
}

const std::vector<std::string>& synthetic_task_names() {
  static const std::vector<std::string> names = {"contains-1", "prefix-dupl", "adj-dupl",
                                                 "first-last"};
  return names;
}

std::pair<int, int> eval_features(const SyntheticTask& task, const std::vector<int>& prompt) {
  return {task.target(prompt) ? 1 : 0, task.spurious(prompt) ? 1 : 0};
}

std::vector<int> sample_quadrant(const SyntheticTask& task, Quadrant q, Rng& rng) {
  const auto [want_t, want_s] = quadrant_indicator(q);
  std::vector<int> prompt(static_cast<std::size_t>(task.prompt_len));
  constexpr int kBudget = 100000;
  for (int attempt = 0; attempt < kBudget; ++attempt) {
    for (int& d : prompt) d = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(task.vocab)));
    const auto [t, s] = eval_features(task, prompt);
    if (t == want_t && s == want_s) return prompt;
  }
  throw std::runtime_error("sample_quadrant: rejection budget exceeded for task " + task.name +
                           ", quadrant " + quadrant_name(q));
}

std::vector<TrainExample> build_training_set(const SyntheticTask& task, double p, int n, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("build_training_set: p must lie in [0,1], got " +
                                std::to_string(p));
  if (n < 2) throw std::invalid_argument("build_training_set: n must be >= 2");
  const int n_s = static_cast<int>(std::lround(p * n));
  const int rest = n - n_s;
  const int n_both = rest / 2;
  const int n_neither = rest - n_both;  // odd remainder goes to neither

  std::vector<TrainExample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n_s; ++i) out.push_back({sample_quadrant(task, Quadrant::s_only, rng), Quadrant::s_only});
  for (int i = 0; i < n_both; ++i) out.push_back({sample_quadrant(task, Quadrant::both, rng), Quadrant::both});
  for (int i = 0; i < n_neither; ++i)
    out.push_back({sample_quadrant(task, Quadrant::neither, rng), Quadrant::neither});
  rng.shuffle(out);
  return out;
}

namespace {

std::uint64_t prompt_key(const std::vector<int>& prompt) {
  std::uint64_t k = 0;
  for (int d : prompt) k = k * 10 + static_cast<std::uint64_t>(d);
  return k;
}

}  // namespace

TestSet build_test_set(const SyntheticTask& task, int n_per_quadrant, Rng& rng,
                       const std::vector<TrainExample>* avoid) {
  if (n_per_quadrant < 1)
    throw std::invalid_argument("build_test_set: n_per_quadrant must be >= 1");
  std::unordered_set<std::uint64_t> seen;
  if (avoid)
    for (const TrainExample& ex : *avoid) seen.insert(prompt_key(ex.prompt));
  TestSet test;
  for (Quadrant q : kQuadrants) {
    auto& bucket = test.per_quadrant[quadrant_index(q)];
    bucket.reserve(static_cast<std::size_t>(n_per_quadrant));
    while (bucket.size() < static_cast<std::size_t>(n_per_quadrant)) {
      std::vector<int> prompt = sample_quadrant(task, q, rng);
      if (seen.insert(prompt_key(prompt)).second) bucket.push_back(std::move(prompt));
    }
  }
  return test;
}

std::string prompt_str(const std::vector<int>& prompt) {
  std::string s;
  s.reserve(prompt.size());
  for (int d : prompt) s += static_cast<char>('0' + d);
  return s;
}

std::vector<int> parse_prompt(const std::string& digits) {
  std::vector<int> prompt;
  prompt.reserve(digits.size());
  for (char c : digits) {
    if (c < '0' || c > '9')
      throw std::invalid_argument("parse_prompt: non-digit character in '" + digits + "'");
    prompt.push_back(c - '0');
  }
  return prompt;
}

std::string dataset_csv(const SyntheticTask& task, const std::vector<TrainExample>& examples) {
  std::ostringstream os;
  os << "prompt_digits,quadrant,t,s\n";
  for (const TrainExample& ex : examples) {
    const auto [t, s] = eval_features(task, ex.prompt);
    os << prompt_str(ex.prompt) << ',' << quadrant_name(ex.quadrant) << ',' << t << ',' << s
       << '\n';
  }
  return os.str();
}

std::string test_set_csv(const SyntheticTask& task, const TestSet& test) {
  std::ostringstream os;
  os << "prompt_digits,quadrant,t,s\n";
  for (Quadrant q : kQuadrants)
    for (const auto& prompt : test.per_quadrant[quadrant_index(q)]) {
      const auto [t, s] = eval_features(task, prompt);
      os << prompt_str(prompt) << ',' << quadrant_name(q) << ',' << t << ',' << s << '\n';
    }
  return os.str();
}

std::vector<TrainExample> parse_dataset_csv(const SyntheticTask& task, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "prompt_digits,quadrant,t,s")
    throw std::invalid_argument("parse_dataset_csv: missing or malformed header");
  std::vector<TrainExample> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string digits, quad, tf, sf;
    if (!std::getline(ls, digits, ',') || !std::getline(ls, quad, ',') ||
        !std::getline(ls, tf, ',') || !std::getline(ls, sf))
      throw std::invalid_argument("parse_dataset_csv: malformed row '" + line + "'");
    TrainExample ex{parse_prompt(digits), quadrant_from_name(quad)};
    const auto [t, s] = eval_features(task, ex.prompt);
    if (t != std::stoi(tf) || s != std::stoi(sf) ||
        ex.quadrant != quadrant_from(t != 0, s != 0))
      throw std::invalid_argument("parse_dataset_csv: features inconsistent in row '" + line + "'");
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace bb
