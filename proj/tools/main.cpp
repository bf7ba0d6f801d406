#include "fusion/cli.hpp"

int main(int argc, char** argv) { return fusion::cli::main_entry(argc, argv); }
