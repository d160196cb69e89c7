#include <iostream>

#include "sigmakit/cli.hpp"

int main(int argc, char** argv) { return sigmakit::run_cli(argc, argv, std::cout, std::cerr); }
