#include "ste/cli.hpp"

int main(int argc, char** argv) { return ste::run_cli(argc, argv); }
