#include "methanet/cli.hpp"

int main(int argc, char** argv) { return methanet::cli::run(argc, argv); }
