#include <unistd.h>

#include <iostream>

#include "rage/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rage::cli::RunCli(args, std::cout, std::cerr, ::isatty(STDOUT_FILENO) != 0);
}
