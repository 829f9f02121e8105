#include "skslab/cli.hpp"

int main(int argc, char** argv) { return sks::cli::run(argc, argv); }
