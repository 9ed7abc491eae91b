#include "freqseg/cli.hpp"

int main(int argc, char** argv) { return freqseg::cli::run(argc, argv); }
