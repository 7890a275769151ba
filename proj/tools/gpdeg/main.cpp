#include <iostream>

#include "gpdeg/cli.hpp"

int main(int argc, char** argv) { return gpdeg::cli::run(argc, argv, std::cout, std::cerr); }
