#include "commands.hpp"

int main(int argc, char** argv) { return privalign::cli::run_cli(argc, argv); }
