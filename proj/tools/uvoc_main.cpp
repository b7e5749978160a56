#include "uvoc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return uvoc::cli::run(argc, argv, std::cout, std::cerr);
}
