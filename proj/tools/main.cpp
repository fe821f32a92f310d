#include "satcalc/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv, argv + argc);
    return satcalc::parse_and_dispatch(args, std::cout, std::cerr);
}
