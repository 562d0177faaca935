#include <string>
#include <vector>

#include "grpo_agg/cli.hpp"

int main(int argc, char** argv) {
  return grpo_agg::cli::run_command(std::vector<std::string>(argv, argv + argc));
}
