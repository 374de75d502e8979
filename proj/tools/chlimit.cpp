#include "chlimit/cli.hpp"

int main(int argc, char** argv) { return chlimit::run_cli(argc, argv); }
