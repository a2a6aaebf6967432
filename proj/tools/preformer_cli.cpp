#include <iostream>

#include "preformer/cli.hpp"

int main(int argc, char** argv) { return preformer::run_cli(argc, argv, std::cout, std::cerr); }
