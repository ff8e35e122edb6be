#include "cbvd/cli.hpp"
#include "cbvd/runtime.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    cbvd::tune_allocator();
    return cbvd::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
