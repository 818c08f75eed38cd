#include "cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return icse::cli::icse_main(argc, argv, std::cout, std::cerr);
}
