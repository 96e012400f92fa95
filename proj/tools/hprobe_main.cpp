#include <iostream>

#include "hprobe/cli.hpp"

int main(int argc, char** argv) { return hprobe::run_cli(argc, argv, std::cout, std::cerr); }
