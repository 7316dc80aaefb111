// Writes the small synthetic corpus shipped under data/sample.

#include <iostream>

#include "synthetic.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_sample_data <output-dir>\n";
    return 2;
  }
  iclc::testing::write_synthetic_data(argv[1], iclc::Task::ANLI, 240, 300, 60, 2024);
  return 0;
}
