#include <iostream>

#include "pqe/cli.hpp"

int main(int argc, char** argv) { return pqe::run_cli(argc, argv, std::cout, std::cerr); }
