#include "segrl/cli.hpp"

int main(int argc, char** argv) { return segrl::cli::main(argc, argv); }
