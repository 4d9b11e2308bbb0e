#include "agristab/cli.hpp"

int main(int argc, char** argv) { return agristab::cli::run(argc, argv); }
