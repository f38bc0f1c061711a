#include <iostream>

#include "dpars_cli/commands.hpp"

int main(int argc, char** argv) { return dpars::cli::run(argc, argv, std::cout, std::cerr); }
