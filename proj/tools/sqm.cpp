#include <iostream>

#include "sqm/cli.hpp"

int main(int argc, char** argv) { return sqm::run_cli(argc, argv, std::cout, std::cerr); }
