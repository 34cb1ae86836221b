#include "cli.hpp"

int main(int argc, char** argv) { return skinrf::run_cli(argc, argv); }
