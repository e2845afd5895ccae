#include "cli.hpp"

int main(int argc, char** argv) { return kakutani::cli::run(argc, argv); }
