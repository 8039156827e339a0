#include "contourrl/commands.hpp"

int main(int argc, char** argv) { return crl::run_cli(argc, argv); }
