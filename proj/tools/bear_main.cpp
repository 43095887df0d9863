#include <iostream>

#include "bear/cli.hpp"

int main(int argc, char** argv) {
    return bear::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
