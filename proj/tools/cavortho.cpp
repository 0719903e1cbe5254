#include <iostream>
#include <string>
#include <vector>

#include "cavortho/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cavortho::cli::run(args, std::cout, std::cerr);
}
