#include "mdm/cli.hpp"

int main(int argc, char** argv) { return mdm::dispatch(argc, argv); }
