#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ssem/grid.hpp"

namespace ssem::test {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ssem_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline RasterScene make_scene(std::uint32_t w, std::uint32_t h, std::uint32_t ch,
                              std::vector<double> data) {
  RasterScene s;
  s.width = w;
  s.height = h;
  s.channels = ch;
  s.data = std::move(data);
  return s;
}

// Well separated three-band classes, no obstacles or noise.
inline SceneSpec separable_spec(std::uint32_t side = 64) {
  SceneSpec spec;
  spec.width = side;
  spec.height = side;
  spec.dry_cov = {0.0025, 0, 0, 0, 0.0025, 0, 0, 0, 0.0025};
  spec.flood_cov = spec.dry_cov;
  spec.obstacle_cov = spec.dry_cov;
  spec.label_ratio = 0.01;
  spec.rng_seed = 42;
  return spec;
}

}  // namespace ssem::test
