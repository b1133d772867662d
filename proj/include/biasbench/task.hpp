#pragma once

#include <array>
#include <string>
#include <vector>

#include "biasbench/rng.hpp"

namespace bb {

// The four cells of the (t, s) feature partition.
enum class Quadrant { s_only, t_only, both, neither };

constexpr std::array<Quadrant, 4> kQuadrants = {Quadrant::s_only, Quadrant::t_only, Quadrant::both,
                                                Quadrant::neither};

Quadrant quadrant_from(bool t, bool s);
// (t, s) indicator pair of a quadrant.
std::pair<int, int> quadrant_indicator(Quadrant q);
const char* quadrant_name(Quadrant q);
Quadrant quadrant_from_name(const std::string& name);
std::size_t quadrant_index(Quadrant q);

// Digit-sequence task: a target predicate t over the prompt and the shared
// spurious predicate s = "the digit 2 occurs in the prompt".
struct SyntheticTask {
  std::string name;
  int prompt_len = 10;
  int vocab = 10;

  bool target(const std::vector<int>& prompt) const;
  bool spurious(const std::vector<int>& prompt) const;
};

// One of: contains-1, prefix-dupl, adj-dupl, first-last.
SyntheticTask make_task(const std::string& name);
const std::vector<std::string>& synthetic_task_names();

// (t, s) indicators; validates length and alphabet.
std::pair<int, int> eval_features(const SyntheticTask& task, const std::vector<int>& prompt);

// Uniform draw from the quadrant's prompt set by rejection from uniform digit
// strings; errors after 1e5 failed tries.
std::vector<int> sample_quadrant(const SyntheticTask& task, Quadrant q, Rng& rng);

struct TrainExample {
  std::vector<int> prompt;
  Quadrant quadrant;
};

// Exactly round(p*n) s-only, remainder split between both and neither with an
// odd remainder favoring neither; shuffled; never contains t-only examples.
std::vector<TrainExample> build_training_set(const SyntheticTask& task, double p, int n, Rng& rng);

struct TestSet {
  std::array<std::vector<std::vector<int>>, 4> per_quadrant;  // indexed by quadrant_index
};

// All four quadrants, n_per_quadrant prompts each; prompts seen in `avoid`
// (and earlier test draws) are excluded via a hash set.
TestSet build_test_set(const SyntheticTask& task, int n_per_quadrant, Rng& rng,
                       const std::vector<TrainExample>* avoid = nullptr);

// CSV with header prompt_digits,quadrant,t,s.
std::string dataset_csv(const SyntheticTask& task, const std::vector<TrainExample>& examples);
std::string test_set_csv(const SyntheticTask& task, const TestSet& test);
std::vector<TrainExample> parse_dataset_csv(const SyntheticTask& task, const std::string& text);

std::string prompt_str(const std::vector<int>& prompt);
std::vector<int> parse_prompt(const std::string& digits);

}  // namespace bb
