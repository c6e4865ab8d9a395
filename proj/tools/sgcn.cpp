#include <string>
#include <vector>

#include "sgcn/cli.hpp"

int main(int argc, char** argv) {
  return sgcn::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
