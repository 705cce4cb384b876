#include <iostream>

#include "lfm/cli.hpp"

int main(int argc, char** argv) { return lfm::run_cli(argc, argv, std::cout, std::cerr); }
