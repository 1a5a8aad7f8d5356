#include "dynsir/cli.hpp"

int main(int argc, char** argv) { return dynsir::cli_main(argc, argv); }
