#include <iostream>
#include <string>
#include <vector>

#include "eqevid/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return eqevid::run_cli(args, std::cout, std::cerr);
}
