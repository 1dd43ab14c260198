#include <string>
#include <vector>

#include "vrd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vrd::cli::run(args);
}
