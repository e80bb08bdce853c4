#include "firemae/cli/cli.hpp"

int main(int argc, char** argv) { return firemae::cli::run_cli(argc, argv); }
