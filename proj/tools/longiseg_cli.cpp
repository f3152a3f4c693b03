#include <iostream>

#include "longiseg/cli.hpp"

int main(int argc, char** argv) {
  return longiseg::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
