#include "cli.hpp"

int main(int argc, char** argv) { return attnbasin::cli::run(argc, argv); }
