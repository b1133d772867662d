#include "biasbench/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "biasbench/io.hpp"
#include "biasbench/task.hpp"

namespace bb {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line_no, const std::string& what) {
  throw std::invalid_argument("config: line " + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& v, int line_no) {
  double out = 0.0;
  const char* begin = v.data();
  const char* end = begin + v.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) fail(line_no, "expected a number, got '" + v + "'");
  return out;
}

template <class Int>
Int parse_int(const std::string& v, int line_no) {
  Int out = 0;
  const char* begin = v.data();
  const char* end = begin + v.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) fail(line_no, "expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v, int line_no) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail(line_no, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_preset(RunConfig& cfg, const std::string& preset, int line_no) {
  if (preset == "desk") {
    cfg.model = desk_scale_config();
    cfg.train_size = 4096;
  } else if (preset == "paper") {
    cfg.model = paper_scale_config();
    cfg.train_size = 24576;
  } else {
    fail(line_no, "unknown preset '" + preset + "' (desk or paper)");
  }
  cfg.preset = preset;
}

}  // namespace

void RunConfig::validate() const {
  make_task(task);  // throws on unknown names
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("config: p must lie in [0, 1], got " + format_double(p));
  model.validate();
  pretrain.validate();
  ppo.validate();
  probe.validate();
  if (train_size < 2) throw std::invalid_argument("config: train_size must be >= 2");
  if (test_per_quadrant < 1) throw std::invalid_argument("config: test_per_quadrant must be >= 1");
  if (probe_n < 4 || probe_n % 2 != 0)
    throw std::invalid_argument("config: probe n must be even and >= 4");
  if (probe_seeds < 1) throw std::invalid_argument("config: probe seeds must be >= 1");
  if (tasks.empty()) throw std::invalid_argument("config: tasks list is empty");
  for (const auto& t : tasks) make_task(t);
  if (p_grid.empty()) throw std::invalid_argument("config: p_grid is empty");
  for (double v : p_grid)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("config: p_grid entry " + format_double(v) + " outside [0, 1]");
  if (seeds < 1) throw std::invalid_argument("config: seeds must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("config: threshold must lie in (0, 1)");
  if (eval_samples < 1) throw std::invalid_argument("config: eval_samples must be >= 1");
  if (workers < 0) throw std::invalid_argument("config: workers must be >= 0");
  if (model.max_seq_len < 10 + ppo.completion_len)
    throw std::invalid_argument("config: max_seq_len too short for prompt plus completion");
}

RunConfig parse_config(const std::string& text) {
  struct Entry {
    int line_no;
    std::string section, key, value;
  };
  std::vector<Entry> entries;
  {
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      const std::string line = trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(line_no, "malformed section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) fail(line_no, "expected key = value, got '" + line + "'");
      if (section.empty()) fail(line_no, "key outside any [section]");
      entries.push_back({line_no, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
    }
  }

  RunConfig cfg;
  // The preset rewrites model/data defaults, so it applies before any other
  // key regardless of where it appears in the file.
  for (const Entry& e : entries)
    if (e.section == "model" && e.key == "preset") apply_preset(cfg, e.value, e.line_no);

  using Handler = std::function<void(RunConfig&, const std::string&, int)>;
  static const std::map<std::string, Handler> handlers = {
      {"run.master_seed",
       [](RunConfig& c, const std::string& v, int l) { c.master_seed = parse_int<std::uint64_t>(v, l); }},
      {"run.condition_seed",
       [](RunConfig& c, const std::string& v, int l) { c.condition_seed = parse_int<std::uint64_t>(v, l); }},
      {"run.task", [](RunConfig& c, const std::string& v, int) { c.task = v; }},
      {"run.p", [](RunConfig& c, const std::string& v, int l) { c.p = parse_double(v, l); }},
      {"model.preset", [](RunConfig&, const std::string&, int) { /* applied above */ }},
      {"model.vocab_size",
       [](RunConfig& c, const std::string& v, int l) { c.model.vocab_size = parse_int<int>(v, l); }},
      {"model.n_layers",
       [](RunConfig& c, const std::string& v, int l) { c.model.n_layers = parse_int<int>(v, l); }},
      {"model.d_model",
       [](RunConfig& c, const std::string& v, int l) { c.model.d_model = parse_int<int>(v, l); }},
      {"model.n_heads",
       [](RunConfig& c, const std::string& v, int l) { c.model.n_heads = parse_int<int>(v, l); }},
      {"model.d_ff",
       [](RunConfig& c, const std::string& v, int l) { c.model.d_ff = parse_int<int>(v, l); }},
      {"model.max_seq_len",
       [](RunConfig& c, const std::string& v, int l) { c.model.max_seq_len = parse_int<int>(v, l); }},
      {"model.value_head",
       [](RunConfig& c, const std::string& v, int l) { c.model.value_head = parse_bool(v, l); }},
      {"pretrain.steps",
       [](RunConfig& c, const std::string& v, int l) { c.pretrain.steps = parse_int<int>(v, l); }},
      {"pretrain.batch_size",
       [](RunConfig& c, const std::string& v, int l) { c.pretrain.batch_size = parse_int<int>(v, l); }},
      {"pretrain.lr",
       [](RunConfig& c, const std::string& v, int l) { c.pretrain.lr = parse_double(v, l); }},
      {"ppo.batch_size",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.batch_size = parse_int<int>(v, l); }},
      {"ppo.lr", [](RunConfig& c, const std::string& v, int l) { c.ppo.lr = parse_double(v, l); }},
      {"ppo.ppo_epochs",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.ppo_epochs = parse_int<int>(v, l); }},
      {"ppo.total_ppo_epochs",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.total_ppo_epochs = parse_int<int>(v, l); }},
      {"ppo.init_kl_coef",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.init_kl_coef = parse_double(v, l); }},
      {"ppo.target_kl",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.target_kl = parse_double(v, l); }},
      {"ppo.vf_coef",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.vf_coef = parse_double(v, l); }},
      {"ppo.horizon",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.horizon = parse_double(v, l); }},
      {"ppo.clip_eps",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.clip_eps = parse_double(v, l); }},
      {"ppo.gamma",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.gamma = parse_double(v, l); }},
      {"ppo.gae_lambda",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.gae_lambda = parse_double(v, l); }},
      {"ppo.minibatch_size",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.minibatch_size = parse_int<int>(v, l); }},
      {"ppo.completion_len",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.completion_len = parse_int<int>(v, l); }},
      {"ppo.temperature",
       [](RunConfig& c, const std::string& v, int l) { c.ppo.temperature = parse_double(v, l); }},
      {"data.train_size",
       [](RunConfig& c, const std::string& v, int l) { c.train_size = parse_int<int>(v, l); }},
      {"data.test_per_quadrant",
       [](RunConfig& c, const std::string& v, int l) { c.test_per_quadrant = parse_int<int>(v, l); }},
      {"probe.n", [](RunConfig& c, const std::string& v, int l) { c.probe_n = parse_int<int>(v, l); }},
      {"probe.seeds",
       [](RunConfig& c, const std::string& v, int l) { c.probe_seeds = parse_int<int>(v, l); }},
      {"probe.steps",
       [](RunConfig& c, const std::string& v, int l) { c.probe.steps = parse_int<int>(v, l); }},
      {"probe.lr",
       [](RunConfig& c, const std::string& v, int l) { c.probe.lr = parse_double(v, l); }},
      {"probe.weight_decay",
       [](RunConfig& c, const std::string& v, int l) { c.probe.weight_decay = parse_double(v, l); }},
      {"probe.prob_floor",
       [](RunConfig& c, const std::string& v, int l) { c.probe.prob_floor = parse_double(v, l); }},
      {"experiment.tasks",
       [](RunConfig& c, const std::string& v, int) { c.tasks = split_list(v); }},
      {"experiment.p_grid",
       [](RunConfig& c, const std::string& v, int l) {
         c.p_grid.clear();
         for (const auto& item : split_list(v)) c.p_grid.push_back(parse_double(item, l));
       }},
      {"experiment.seeds",
       [](RunConfig& c, const std::string& v, int l) { c.seeds = parse_int<int>(v, l); }},
      {"experiment.threshold",
       [](RunConfig& c, const std::string& v, int l) { c.threshold = parse_double(v, l); }},
      {"experiment.eval_samples",
       [](RunConfig& c, const std::string& v, int l) { c.eval_samples = parse_int<int>(v, l); }},
      {"experiment.workers",
       [](RunConfig& c, const std::string& v, int l) { c.workers = parse_int<int>(v, l); }},
  };
  static const std::vector<std::string> known_sections = {"run",  "model", "pretrain", "ppo",
                                                          "data", "probe", "experiment"};

  for (const Entry& e : entries) {
    bool section_known = false;
    for (const auto& s : known_sections) section_known = section_known || s == e.section;
    if (!section_known) fail(e.line_no, "unknown section [" + e.section + "]");
    const auto it = handlers.find(e.section + "." + e.key);
    if (it == handlers.end())
      fail(e.line_no, "unknown key '" + e.key + "' in section [" + e.section + "]");
    it->second(cfg, e.value, e.line_no);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) { return parse_config(read_text_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "master_seed = " << cfg.master_seed << "\n";
  out << "condition_seed = " << cfg.condition_seed << "\n";
  out << "task = " << cfg.task << "\n";
  out << "p = " << format_double(cfg.p) << "\n";
  out << "\n[model]\n";
  out << "preset = " << cfg.preset << "\n";
  out << "vocab_size = " << cfg.model.vocab_size << "\n";
  out << "n_layers = " << cfg.model.n_layers << "\n";
  out << "d_model = " << cfg.model.d_model << "\n";
  out << "n_heads = " << cfg.model.n_heads << "\n";
  out << "d_ff = " << cfg.model.d_ff << "\n";
  out << "max_seq_len = " << cfg.model.max_seq_len << "\n";
  out << "value_head = " << (cfg.model.value_head ? "true" : "false") << "\n";
  out << "\n[pretrain]\n";
  out << "steps = " << cfg.pretrain.steps << "\n";
  out << "batch_size = " << cfg.pretrain.batch_size << "\n";
  out << "lr = " << format_double(cfg.pretrain.lr) << "\n";
  out << "\n[ppo]\n";
  out << "batch_size = " << cfg.ppo.batch_size << "\n";
  out << "lr = " << format_double(cfg.ppo.lr) << "\n";
  out << "ppo_epochs = " << cfg.ppo.ppo_epochs << "\n";
  out << "total_ppo_epochs = " << cfg.ppo.total_ppo_epochs << "\n";
  out << "init_kl_coef = " << format_double(cfg.ppo.init_kl_coef) << "\n";
  out << "target_kl = " << format_double(cfg.ppo.target_kl) << "\n";
  out << "vf_coef = " << format_double(cfg.ppo.vf_coef) << "\n";
  out << "horizon = " << format_double(cfg.ppo.horizon) << "\n";
  out << "clip_eps = " << format_double(cfg.ppo.clip_eps) << "\n";
  out << "gamma = " << format_double(cfg.ppo.gamma) << "\n";
  out << "gae_lambda = " << format_double(cfg.ppo.gae_lambda) << "\n";
  out << "minibatch_size = " << cfg.ppo.minibatch_size << "\n";
  out << "completion_len = " << cfg.ppo.completion_len << "\n";
  out << "temperature = " << format_double(cfg.ppo.temperature) << "\n";
  out << "\n[data]\n";
  out << "train_size = " << cfg.train_size << "\n";
  out << "test_per_quadrant = " << cfg.test_per_quadrant << "\n";
  out << "\n[probe]\n";
  out << "n = " << cfg.probe_n << "\n";
  out << "seeds = " << cfg.probe_seeds << "\n";
  out << "steps = " << cfg.probe.steps << "\n";
  out << "lr = " << format_double(cfg.probe.lr) << "\n";
  out << "weight_decay = " << format_double(cfg.probe.weight_decay) << "\n";
  out << "prob_floor = " << format_double(cfg.probe.prob_floor) << "\n";
  out << "\n[experiment]\n";
  out << "tasks = ";
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) out << (i ? "," : "") << cfg.tasks[i];
  out << "\np_grid = ";
  for (std::size_t i = 0; i < cfg.p_grid.size(); ++i)
    out << (i ? "," : "") << format_double(cfg.p_grid[i]);
  out << "\nseeds = " << cfg.seeds << "\n";
  out << "threshold = " << format_double(cfg.threshold) << "\n";
  out << "eval_samples = " << cfg.eval_samples << "\n";
  out << "workers = " << cfg.workers << "\n";
  return out.str();
}

}  // namespace bb
