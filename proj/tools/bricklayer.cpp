#include <iostream>

#include "bricklayer/cli.hpp"

int main(int argc, char** argv) { return bricklayer::run_cli(argc, argv, std::cout, std::cerr); }
