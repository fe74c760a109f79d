#include <iostream>
#include <string>
#include <vector>

#include "induce/cli.hpp"

int main(int argc, char** argv) {
  induce::configure_logging();
  return induce::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
