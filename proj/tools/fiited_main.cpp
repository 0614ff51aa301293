#include <iostream>
#include <string>
#include <vector>

#include "fiited/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return fiited::run_cli(args, std::cout, std::cerr);
}
