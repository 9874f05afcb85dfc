#include <iostream>

#include "aemr/cli.hpp"

int main(int argc, char** argv) {
  return aemr::run_cli(argc, argv, std::cout, std::cerr);
}
