#include "tsasr/cli/dispatch.hpp"

#include <iostream>

int main(int argc, char** argv) { return tsasr::dispatch(argc, argv, std::cout, std::cerr); }
