#include "dynsur/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dynsur::cli::run(argc, argv, std::cout, std::cerr); }
