#include <iostream>

#include "hml/cli/commands.hpp"

int main(int argc, char** argv) { return hml::cli::run(argc, argv, std::cout, std::cerr); }
