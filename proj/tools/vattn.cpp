#include <iostream>

#include "vattn/cli.hpp"

int main(int argc, char** argv) { return vattn::cli::run(argc, argv, std::cout, std::cerr); }
