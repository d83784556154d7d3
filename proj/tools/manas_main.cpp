#include "manas/cli.hpp"

int main(int argc, char** argv) { return manas::cli::run(argc, argv); }
