#include "ccam/cli.hpp"

int main(int argc, char** argv) { return ccam::run(argc, argv); }
