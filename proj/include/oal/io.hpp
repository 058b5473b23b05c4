#pragma once

// Run-directory persistence. Every subcommand writes into a fresh directory
// named by UTC timestamp plus config hash (accidental overwrite is thereby
// impossible); file contents never embed timestamps, so identical configs
// reproduce identical artifact bytes. A manifest records the content hash of
// every emitted file and of every consumed input.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "oal/hash.hpp"

namespace oal {

// Atomic write: temp file in the target directory, then rename.
inline void write_text(const std::filesystem::path& file, const std::string& content) {
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
  }
  std::filesystem::rename(tmp, file);
}

inline std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("io: cannot read " + file.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02dT%02d%02d%02d", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

// <out>/<subcommand>-<timestamp>-<confighash12>[-n]; the numeric suffix only
// appears when several runs of the same config start within one second.
inline std::filesystem::path create_run_dir(const std::filesystem::path& out_root,
                                            const std::string& subcommand,
                                            const nlohmann::json& config_snapshot) {
  std::filesystem::create_directories(out_root);
  const std::string stamp = utc_timestamp();
  const std::string hash = content_hash(config_snapshot.dump()).substr(0, 12);
  for (int n = 0;; ++n) {
    std::filesystem::path dir =
        out_root / (subcommand + "-" + stamp + "-" + hash + (n == 0 ? "" : "-" + std::to_string(n)));
    std::error_code ec;
    if (std::filesystem::create_directory(dir, ec)) return dir;
    if (ec) throw std::runtime_error("io: cannot create run directory " + dir.string());
  }
}

// Content hashes keyed by path relative to the run directory, split into the
// files this run produced and the inputs it consumed.
class Manifest {
 public:
  void add_output(const std::filesystem::path& run_dir, const std::string& rel) {
    outputs_[rel] = file_hash(run_dir / rel);
  }
  void add_input(const std::string& name, const std::filesystem::path& file) {
    inputs_[name] = file_hash(file);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["outputs"] = outputs_;
    j["inputs"] = inputs_;
    return j;
  }

  void write(const std::filesystem::path& run_dir) const {
    write_text(run_dir / "manifest.json", to_json().dump(2) + "\n");
  }

 private:
  std::map<std::string, std::string> outputs_;
  std::map<std::string, std::string> inputs_;
};

}  // namespace oal
