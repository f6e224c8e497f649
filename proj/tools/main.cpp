#include <iostream>

#include "collab/cli.hpp"

int main(int argc, char** argv) { return collab::dispatch(argc, argv, std::cerr); }
