#include "manifest.hpp"

#include <fstream>

#include "hsnerf/common.hpp"
#include "json.hpp"

#ifndef HSNERF_VERSION
#define HSNERF_VERSION "unknown"
#endif

namespace hsnerf::cli {

RunManifest::RunManifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

void RunManifest::write(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["tool_version"] = HSNERF_VERSION;
  j["config"] = config_;
  if (has_seed_) j["seed"] = seed_;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  nlohmann::ordered_json res = nlohmann::ordered_json::object();
  for (const auto& [k, v] : results_) res[k] = v;
  j["results"] = res;
  j["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace hsnerf::cli
