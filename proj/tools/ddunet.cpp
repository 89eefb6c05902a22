#include <iostream>

#include "ddunet/app/commands.hpp"

int main(int argc, char** argv) { return ddunet::app::run_cli(argc, argv, std::cout, std::cerr); }
