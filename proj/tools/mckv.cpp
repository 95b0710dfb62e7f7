#include "mckv/cli/app.hpp"

int main(int argc, char** argv) { return mckv::cli::run(argc, argv); }
