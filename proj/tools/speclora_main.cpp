#include <iostream>

#include "speclora/cli.hpp"

int main(int argc, char** argv) { return speclora::cli::run(argc, argv, std::cout, std::cerr); }
