#include <iostream>

#include "ssem/cli.hpp"

int main(int argc, char** argv) { return ssem::run_cli(argc, argv, std::cout, std::cerr); }
