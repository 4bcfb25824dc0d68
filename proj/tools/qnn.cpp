#include <string>
#include <vector>

#include "qnn/cli.hpp"

int main(int argc, char** argv) {
  return qnn::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
