#include <malloc.h>

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  // Activation buffers are large and short-lived; keep them off the mmap path.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return funcnet::cli::run(argc, argv, std::cout, std::cerr);
}
