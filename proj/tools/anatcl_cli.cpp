#include <string>
#include <vector>

#include "anatcl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return anatcl::cli::run(std::move(args));
}
