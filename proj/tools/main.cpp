#include <iostream>
#include <string>
#include <vector>

#include "explainbench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return explainbench::cli_main(args, std::cout, std::cerr);
}
