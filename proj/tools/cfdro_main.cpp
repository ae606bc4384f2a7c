#include "cfdro/cli.hpp"

int main(int argc, char** argv) { return cfdro::run_cli(argc, argv); }
