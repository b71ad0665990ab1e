#include "ptal/cli.hpp"

int main(int argc, char** argv) { return ptal::cli::run(argc, argv); }
