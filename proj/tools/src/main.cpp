#include <iostream>

#include "svicli/dispatch.hpp"

int main(int argc, char** argv) {
  return svi::cli::dispatch(argc, argv, std::cout, std::cerr);
}
