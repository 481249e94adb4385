#include <iostream>
#include <string>
#include <vector>

#include "nfb/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nfb::RunCli(args, std::cout, std::cerr);
}
