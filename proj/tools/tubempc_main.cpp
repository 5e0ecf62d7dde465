#include <iostream>

#include "tubempc/cli.hpp"

int main(int argc, char** argv) { return tubempc::cli::run(argc, argv, std::cout, std::cerr); }
