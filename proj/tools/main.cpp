#include <string>
#include <vector>

#include "tqbsde/cli_io.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return tqbsde::run_command(std::move(args));
}
