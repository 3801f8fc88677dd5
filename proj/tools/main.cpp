#include <string>
#include <vector>

#include "emoattr/cli.hpp"

int main(int argc, char** argv) {
  return emoattr::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
