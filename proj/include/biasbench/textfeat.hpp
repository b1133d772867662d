#pragma once

#include <functional>
#include <string>
#include <vector>

#include "biasbench/rng.hpp"
#include "biasbench/task.hpp"

namespace bb {

// Naturalistic feature-pair transforms: each task plants a target and a
// spurious marker into raw text according to the requested quadrant. Dataset
// preparation only; no model ever trains on these here.
struct TextTask {
  std::string name;  // film_vs_movie, $_first, score, #_second,
                     // whitespace_start, whitespace_count, -_start
  std::string word = "review";  // "review" or "prompt", used by `score`
};

TextTask make_text_task(const std::string& name, const std::string& word = "review");
const std::vector<std::string>& text_task_names();

enum class Parity { even, odd };

// Span-based token positions, default whitespace-delimited. Pluggable so a
// subword tokenizer can replace it without touching the parity logic.
using Tokenizer = std::function<std::vector<std::pair<std::size_t, std::size_t>>(const std::string&)>;
std::vector<std::pair<std::size_t, std::size_t>> whitespace_tokens(const std::string& text);

// Parity of the number of whitespace characters from the start of the string
// up to the start of the (k+1)-th token (whole string when there are exactly k
// tokens). Errors when the text has fewer than k tokens.
Parity whitespace_parity(const std::string& text, int k = 11, const Tokenizer& tokenizer = {});

// Transformed copy of `text` carrying the quadrant's (t, s) markers.
std::string apply_feature_pair(const TextTask& task, const std::string& text, Quadrant q,
                               Rng& rng);

// Reads the planted (t, s) indicators back out of a transformed line.
std::pair<int, int> recover_features(const TextTask& task, const std::string& line);

// Same composition rule as build_training_set (round(p*n) s-only, remainder
// split both/neither, no t-only), over lines drawn from the corpus without
// replacement. Returns CSV text with columns text,quadrant,t,s.
std::string build_text_dataset(const std::vector<std::string>& corpus_lines, const TextTask& task,
                               double p, int n, Rng& rng);

/// File-based variant: reads one prompt per line, writes the CSV to out_path.
void build_text_dataset_file(const std::string& corpus_path, const TextTask& task, double p, int n,
                             Rng& rng, const std::string& out_path);

std::string csv_quote(const std::string& field);

}  // namespace bb
