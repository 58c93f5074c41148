#include "drugsurv/cli.hpp"

int main(int argc, char** argv) { return drugsurv::run_cli(argc, argv); }
