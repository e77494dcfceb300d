// Regenerates tests/golden. Usage: make_goldens <dir>
#include <filesystem>
#include <iostream>

#include "../tests/golden_fixtures.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_goldens <dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  try {
    std::filesystem::create_directories(dir);
    for (const auto& f : sopose::golden::all_files()) {
      sopose::write_file_atomic(dir / f.name, f.bytes);
      std::cout << f.name << " " << f.bytes.size() << " bytes crc "
                << std::hex << sopose::crc32_of(f.bytes) << std::dec << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
