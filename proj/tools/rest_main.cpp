#include <iostream>

#include "rest/cli/cli.hpp"

int main(int argc, char** argv) { return rest::run_cli(argc, argv, std::cout, std::cerr); }
