#include "empilab/cli.hpp"

int main(int argc, char** argv) { return empilab::run_cli(argc, argv); }
