#include <string>
#include <vector>

#include "quadmotion/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return quadmotion::cli::run_cli(std::move(args));
}
