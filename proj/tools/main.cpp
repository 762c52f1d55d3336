#include "aar/harness/cli.hpp"

int main(int argc, char ** argv) { return aar::harness::run_cli(argc, argv); }
