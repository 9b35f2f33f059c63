#include <iostream>

#include "stewart_cbf_cli/cli.hpp"

int main(int argc, char** argv) { return stewart_cbf::cli::run_cli(argc, argv, std::cout, std::cerr); }
