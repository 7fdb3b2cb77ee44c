#include "piwan/cli.hpp"

int main(int argc, char** argv) { return piwan::cli_main(argc, argv); }
