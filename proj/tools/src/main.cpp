#include <iostream>

#include "pixelflow/commands.hpp"

int main(int argc, char** argv) {
  pixelflow::cli::tune_allocator();
  return pixelflow::cli::run(argc, argv, std::cout, std::cerr);
}
