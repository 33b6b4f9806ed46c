#include "kfwer_cli.hpp"

int main(int argc, char** argv) { return kfwer::cli::run_cli(argc, argv); }
