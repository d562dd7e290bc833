#include "trajrep/cli.hpp"

int main(int argc, char** argv) { return trajrep::run_cli(argc, argv); }
