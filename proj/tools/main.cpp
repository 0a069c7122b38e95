// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training frees and reallocates the same large buffers every step; keep
  // them in the heap instead of mapping and unmapping pages each time.
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
  return hava::cli::run_cli(argc, argv);
}
