#include "attackcast/cli.hpp"

int main(int argc, char** argv) { return attackcast::run(argc, argv); }
