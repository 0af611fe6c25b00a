#include "cxsim/cli.hpp"

int main(int argc, char** argv) { return cxsim::cli::run_command(argc, argv); }
