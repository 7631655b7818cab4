#include "hdpo/runner.hpp"

int main(int argc, char** argv) { return hdpo::cli_main(argc, argv); }
