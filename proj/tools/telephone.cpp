#include <iostream>

#include "telephone/cli.hpp"

int main(int argc, char** argv) {
  return telephone::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
