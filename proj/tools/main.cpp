#include "commands.hpp"

int main(int argc, char** argv) { return gridlex::cli::run(argc, argv); }
