#include <protovar/cli.hpp>

int main(int argc, char** argv) {
    return protovar::cli::main(argc, argv);
}
