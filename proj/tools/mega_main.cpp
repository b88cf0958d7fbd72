#include "mega/cli.hpp"

int main(int argc, char** argv) { return mega::cli::run(argc, argv); }
