#include <iostream>
#include <string>
#include <vector>

#include "gnpe/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return gnpe::run_cli(args, std::clog, std::cerr);
}
