// nntrace: headless driver (train | validate | inspect | predict).

#include <iostream>
#include <string>
#include <vector>

#include "nntrace/cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nntrace::cli::run_cli(args, std::cout, std::cerr);
}
