#include <iostream>
#include <string>
#include <vector>

#include "lingsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lingsim::cli::run(args, std::cout, std::cerr);
}
