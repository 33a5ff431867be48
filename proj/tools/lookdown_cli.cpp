#include "lookdown/cli.hpp"

int main(int argc, char** argv) { return lookdown::run_cli(argc, argv); }
