#include "kws/commands.hpp"

int main(int argc, char** argv) { return kws::cli::run(argc, argv); }
