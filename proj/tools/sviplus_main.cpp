#include "sviplus/cli.hpp"

int main(int argc, char** argv) { return sviplus::cli::cli_main(argc, argv); }
