#include "cli.hpp"

int main(int argc, char** argv) { return avp::cli::run(argc, argv); }
