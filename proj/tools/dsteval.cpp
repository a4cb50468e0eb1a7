#include "dsteval/cli.hpp"

int main(int argc, char** argv) { return dsteval::run_cli(argc, argv); }
