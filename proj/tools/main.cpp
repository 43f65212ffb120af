#include <iostream>

#include "kernelsurf/cli.hpp"

int main(int argc, char** argv) { return kernelsurf::run_cli(argc, argv, std::cout, std::cerr); }
