#include "hetrisk/cli.hpp"
int main(int argc, char** argv) { return hetrisk::run_cli(argc, argv); }
