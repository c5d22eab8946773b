#include "mtgrr/cli.hpp"

int main(int argc, char** argv) { return mtgrr::cli::run_cli(argc, argv); }
