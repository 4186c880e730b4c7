#include <string>
#include <vector>

#include "sfofr/cli.hpp"

int main(int argc, char** argv) {
  return sfofr::cli::run(std::vector<std::string>(argv, argv + argc));
}
