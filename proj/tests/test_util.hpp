#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "collab/event_log.hpp"

namespace collab::testing {

struct Click {
  std::int64_t ts;
  std::string user;
  std::int32_t x;
  std::int32_t y;
  std::int64_t color = 0;
};

inline EventStream make_stream(std::int32_t width, std::int32_t height, const std::vector<Click>& clicks) {
  std::ostringstream csv;
  csv << "ts,user,x,y,color\n";
  for (const auto& c : clicks) csv << c.ts << ',' << c.user << ',' << c.x << ',' << c.y << ',' << c.color << '\n';
  return parse_events_text(csv.str(), width, height).stream;
}

/// Fresh directory under the build tree, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "tmp";
    for (auto& ch : name)
      if (ch == '/') ch = '_';
    path_ = std::filesystem::temp_directory_path() / ("collab_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace collab::testing
