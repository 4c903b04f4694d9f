#include <iostream>

#include "lagscope_cli/cli.hpp"

int main(int argc, char** argv) {
  return lagscope::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
