#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bevfuse::train {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
void ensure_dir(const std::string& path);
// Sorted *.json paths directly inside dir.
std::vector<std::string> list_json_files(const std::string& dir);

}  // namespace bevfuse::train
