#include <iostream>

#include "maskgil/cli/commands.hpp"

int main(int argc, char** argv) { return maskgil::cli::run_cli(argc, argv, std::cout, std::cerr); }
