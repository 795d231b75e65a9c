#include "treepos/cli.hpp"

int main(int argc, char** argv) { return treepos::cli::run(argc, argv); }
