#include "cffe/cli.hpp"

int main(int argc, char** argv) { return cffe::cli::run(argc, argv); }
