#include "cli/commands.hpp"

int main(int argc, char** argv) { return knowgpt::cli::run(argc, argv); }
