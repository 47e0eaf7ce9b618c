#include <dcstab/cli.hpp>

int main(int argc, char** argv) { return dcstab::cli::run(argc, argv); }
