#include "ssa/cli.hpp"

int main(int argc, char** argv) { return ssa::cli::run(argc, argv); }
