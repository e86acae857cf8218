#include "mtrerank/cli/commands.hpp"

int main(int argc, char** argv) { return mtrerank::cli::run_cli(argc, argv); }
