#include <iostream>
#include <string>
#include <vector>

#include "mindact/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mindact::run_command(args, std::cout, std::cerr);
}
