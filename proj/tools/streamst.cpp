#include <iostream>

#include "streamst/cli.hpp"

int main(int argc, char** argv) { return streamst::cli::run(argc, argv, std::cout, std::cerr); }
