#include "cli.hpp"

int main(int argc, char** argv) { return hsnerf::cli::run(argc, argv); }
