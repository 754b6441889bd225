#include "amcnn/cli.hpp"

int main(int argc, char** argv) { return amcnn::cli::main(argc, argv); }
