#include "uwloc/cli.hpp"

int main(int argc, char** argv) { return uwloc::cli::run(argc, argv); }
