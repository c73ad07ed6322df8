#include <iostream>

#include "tlm/cli.hpp"

int main(int argc, char** argv) { return tlm::runCli(argc, argv, std::cout, std::cerr); }
