#include "ipreuse/cli.hpp"

int main(int argc, char** argv) { return ipreuse::cli::run_cli(argc, argv); }
