#include "roundabout/cli.hpp"

int main(int argc, char** argv) { return roundabout::run_cli(argc, argv); }
