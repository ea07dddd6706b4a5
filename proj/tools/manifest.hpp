#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hsnerf::cli {

// One JSON record per command run, written next to the outputs. Only
// duration_s varies between identical invocations.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_config(std::string effective_config) { config_ = std::move(effective_config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; has_seed_ = true; }
  void add_input(const std::filesystem::path& p) { inputs_.push_back(p.string()); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }
  void add_result(const std::string& key, double value) { results_.emplace_back(key, value); }

  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::string config_;
  std::uint64_t seed_ = 0;
  bool has_seed_ = false;
  std::vector<std::string> inputs_, outputs_;
  std::vector<std::pair<std::string, double>> results_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace hsnerf::cli
