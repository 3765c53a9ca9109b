#include <string>
#include <vector>

#include "fancl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fancl::run_cli(args);
}
