#pragma once

#include <fstream>
#include <sstream>
#include <string>

namespace nntrace::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string fixture(const std::string& name) {
  return read_file(std::string(NNTRACE_TEST_DATA_DIR) + "/" + name);
}

}  // namespace nntrace::testing
