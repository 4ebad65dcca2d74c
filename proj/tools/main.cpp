#include <iostream>
#include <string>
#include <vector>

#include "paddyforge/cli.hpp"

int main(int argc, char** argv) {
    return pf::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout);
}
