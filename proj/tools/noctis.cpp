#include "noctis/cli.hpp"

int main(int argc, char** argv) { return noctis::cli::run(argc, argv); }
