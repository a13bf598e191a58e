#include "kstab/cli.hpp"

int main(int argc, char** argv) { return kstab::cli::run_cli(argc, argv); }
