#include "prefixrank/cli.hpp"

int main(int argc, char** argv) { return prefixrank::cli::run(argc, argv); }
