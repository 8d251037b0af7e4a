#include "parl/cli.hpp"

int main(int argc, char** argv) { return parl::cli::run(argc, argv); }
