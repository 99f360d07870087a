#include "adsorbtext/cli.hpp"

int main(int argc, char** argv) { return adsorbtext::cli::run(argc, argv); }
