#include "consql/cli.hpp"

int main(int argc, char** argv) { return consql::cli::run_main(argc, argv); }
