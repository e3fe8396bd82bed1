#include "segens/cli.hpp"

int main(int argc, char** argv) {
    return segens::cli::run(argc, argv);
}
