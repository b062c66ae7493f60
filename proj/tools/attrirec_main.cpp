#include <iostream>

#include "attrirec/cli.hpp"

int main(int argc, char** argv) { return attrirec::run_cli(argc, argv, std::cout, std::cerr); }
