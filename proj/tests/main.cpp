#include "yamabe/spectral.hpp"

#include <catch_amalgamated.hpp>

int main(int argc, char** argv) {
  ym::select_blas_kernel(argv);
  return Catch::Session().run(argc, argv);
}
