#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bb {

// Shortest decimal string that round-trips to the same double. Used for every
// numeric field in CSV/JSON output so identical runs produce identical bytes.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// Write-temp-then-rename so readers never observe partial files.
void atomic_write_file(const std::string& path, const std::string& content);

void ensure_dir(const std::string& path);
bool file_exists(const std::string& path);

// Run-directory layout shared by all subcommands.
struct RunDir {
  std::string root;
  explicit RunDir(std::string root_path);
  std::string datasets() const { return root + "/datasets"; }
  std::string checkpoints() const { return root + "/checkpoints"; }
  std::string logs() const { return root + "/logs"; }
  std::string reports() const { return root + "/reports"; }
  std::string plots() const { return root + "/plots"; }
  void init() const;  // creates root and all subdirectories
};

// Machine-readable error line written to stderr by the CLI.
std::string error_line(const std::string& stage, const std::string& message);

}  // namespace bb
