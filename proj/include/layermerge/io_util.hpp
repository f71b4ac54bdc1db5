#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace layermerge {

// All artifact writes go through a temp file + rename so readers never see
// a half-written file and interrupted runs leave no corrupt outputs.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), long(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// %.9g round-trips float-valued doubles exactly, keeping history files
// byte-stable across identical runs.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct HistoryRow;  // gnn.hpp

template <typename Row>
std::string history_csv(const std::vector<Row>& rows) {
  std::string out = "epoch,train_loss,val_loss,val_precision,val_recall,val_accuracy,val_f1,lr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + format_g9(r.train_loss) + ',' +
           format_g9(r.val_loss) + ',' + format_g9(r.val_precision) + ',' +
           format_g9(r.val_recall) + ',' + format_g9(r.val_accuracy) + ',' +
           format_g9(r.val_f1) + ',' + format_g9(r.lr) + '\n';
  }
  return out;
}

// Written alongside every command's outputs; re-running the recorded
// command line reproduces them bit-exactly.
constexpr const char* kToolVersion = "layermerge 1.0.0";

inline nlohmann::json run_manifest(const std::string& command,
                                   const nlohmann::json& resolved_flags,
                                   const std::vector<std::string>& artifacts) {
  return nlohmann::json{{"tool", kToolVersion},
                        {"command", command},
                        {"flags", resolved_flags},
                        {"artifacts", artifacts}};
}

inline void write_run_manifest(const std::filesystem::path& dir, const std::string& command,
                               const nlohmann::json& resolved_flags,
                               const std::vector<std::string>& artifacts) {
  atomic_write_file(dir / (command + ".manifest.json"),
                    run_manifest(command, resolved_flags, artifacts).dump(2) + "\n");
}

}  // namespace layermerge
