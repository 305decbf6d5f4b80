#include <iostream>

#include "pvot/cli.hpp"

int main(int argc, char** argv) { return pvot::cli::parse_and_dispatch(argc, argv, std::cout, std::cerr); }
