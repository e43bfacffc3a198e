#include "knng/cli.hpp"

int main(int argc, char** argv) { return knng::cli::main(argc, argv); }
