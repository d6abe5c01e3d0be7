#include <iostream>

#include "wsym/cli.hpp"

int main(int argc, char** argv) {
  return wsym::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
