#include <iostream>

#include "roar/cli.hpp"

int main(int argc, char** argv) { return roar::run_cli(argc, argv, std::cout, std::cerr); }
