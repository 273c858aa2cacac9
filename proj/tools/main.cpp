#include <iostream>
#include <string>
#include <vector>

#include "cloudvote/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return cloudvote::cli::run(args, std::cout, std::cerr);
}
