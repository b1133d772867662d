#include "biasbench/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <json.hpp>

namespace fs = std::filesystem;

namespace bb {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("io: cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("io: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("io: failed writing " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("io: rename " + tmp + " -> " + path + " failed: " + ec.message());
  }
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) throw std::runtime_error("io: cannot create directory " + path + ": " + ec.message());
}

bool file_exists(const std::string& path) { return fs::exists(path); }

RunDir::RunDir(std::string root_path) : root(std::move(root_path)) {
  if (root.empty()) throw std::invalid_argument("io: run directory path is empty");
  while (root.size() > 1 && root.back() == '/') root.pop_back();
}

void RunDir::init() const {
  ensure_dir(root);
  ensure_dir(datasets());
  ensure_dir(checkpoints());
  ensure_dir(logs());
  ensure_dir(reports());
  ensure_dir(plots());
}

std::string error_line(const std::string& stage, const std::string& message) {
  nlohmann::json j;
  j["error"]["stage"] = stage;
  j["error"]["message"] = message;
  return j.dump();
}

}  // namespace bb
