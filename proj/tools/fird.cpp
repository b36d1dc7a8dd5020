#include "fird/cli.hpp"

int main(int argc, char** argv) { return fird::run_cli(argc, argv); }
