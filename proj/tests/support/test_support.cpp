#include "test_support.hpp"

#include <atomic>
#include <random>
#include <unistd.h>

#include "dlrepro/util/text.hpp"

namespace dlrepro::test {

std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(DLREPRO_FIXTURES) / rel; }

std::string read_fixture(const std::string& rel) { return text::read_file(fixture(rel).string()); }

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("dlrepro-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
           std::to_string(rd()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void TempDir::write(const std::string& rel, const std::string& content) const {
  auto p = path_ / rel;
  std::filesystem::create_directories(p.parent_path());
  text::write_file(p.string(), content);
}

std::string python_executable() {
  std::string p = DLREPRO_PYTHON;
  return p.empty() ? "python3" : p;
}

}  // namespace dlrepro::test
