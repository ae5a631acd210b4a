#include "milg/cli.hpp"

int main(int argc, char** argv) { return milg::cli::main(argc, argv); }
