#include "akd/cli.hpp"

int main(int argc, char** argv) { return akd::cli::run(argc, argv); }
