#include "echomap/cli.hpp"

int main(int argc, char** argv) { return echomap::run_cli(argc, argv); }
