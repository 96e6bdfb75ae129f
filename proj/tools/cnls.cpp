#include "cnls/cli.hpp"

int main(int argc, char** argv) { return cnls::cli_main(argc, argv); }
