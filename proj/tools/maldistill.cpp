#include "maldistill/cli/cli.hpp"

int main(int argc, char** argv) { return maldistill::cli::dispatch(argc, argv); }
