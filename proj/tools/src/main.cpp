#include <iostream>

#include "lion_cli/commands.hpp"

int main(int argc, char** argv) { return lion::cli::run(argc, argv, std::cout, std::cerr); }
