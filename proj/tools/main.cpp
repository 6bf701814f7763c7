#include <string>
#include <vector>

#include "ptznav/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ptznav::pipeline::run_cli(args);
}
