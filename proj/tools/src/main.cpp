#include "poisson_kam_cli/cli.hpp"

int main(int argc, char** argv) { return poisson_kam::cli::main_entry(argc, argv); }
