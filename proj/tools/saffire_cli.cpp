#include "saffire/evalcli.hpp"

int main(int argc, char **argv) { return saffire::cli_main(argc, argv); }
