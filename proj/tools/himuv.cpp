#include "himuv/cli.hpp"

int main(int argc, char** argv)
{
    return himuv::cli_main(argc, argv);
}
