#include "idrestore/cli.hpp"

int main(int argc, char** argv) { return idr::cli::run(argc, argv); }
