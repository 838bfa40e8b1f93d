#include <iostream>
#include <string>
#include <vector>

#include "patchcraft/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return patchcraft::run_cli(args, std::cout, std::cerr);
}
