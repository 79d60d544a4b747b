#include "nnstego/cli.hpp"

int main(int argc, char** argv) { return nnstego::run_cli(argc, argv); }
