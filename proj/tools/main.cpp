#include "cmfuse/cli.hpp"

int main(int argc, char** argv) { return cmfuse::cli::run(argc, argv); }
