#include <iostream>

#include "sopose/commands.hpp"

int main(int argc, char** argv) { return sopose::run_cli(argc, argv, std::cout, std::cerr); }
