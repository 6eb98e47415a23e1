#include "cli.hpp"

int main(int argc, char** argv) { return falter::cli::run(argc, argv); }
