#include "mfeec/cli.hpp"

int main(int argc, char** argv) { return mfeec::cli::run(argc, argv); }
