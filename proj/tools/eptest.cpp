#include "cli/commands.hpp"

int main(int argc, char** argv) { return eptest::cli::run_cli(argc, argv); }
