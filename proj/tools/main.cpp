#include "cli.hpp"

int main(int argc, char** argv) { return splatsched::cli::run(argc, argv); }
