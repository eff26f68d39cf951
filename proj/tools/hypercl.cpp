#include "cli.hpp"

int main(int argc, char** argv) { return hypercl::cli::run(argc, argv); }
