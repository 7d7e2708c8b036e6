#include <iostream>

#include "agm/cli.hpp"

int main(int argc, char** argv) { return agm::run_cli(argc, argv, std::cout, std::cerr); }
