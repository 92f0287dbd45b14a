#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clinmcq/app/config.hpp"

#ifndef CLINMCQ_VERSION
#define CLINMCQ_VERSION "0.0.0"
#endif

namespace clinmcq {

/// Provenance record written next to every artifact.
struct Manifest {
  std::string subcommand;
  std::vector<std::string> command;  // argv
  json config;
  std::string config_hash;
  json parameters = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
  json summary = json::object();

  void add_input(const std::string& path) { inputs.emplace_back(path, hash_file(path)); }
  void add_output(const std::string& path) { outputs.emplace_back(path, hash_file(path)); }
};

inline json to_json(const Manifest& m) {
  json in = json::object(), out = json::object();
  for (const auto& [p, h] : m.inputs) in[p] = h;
  for (const auto& [p, h] : m.outputs) out[p] = h;
  return json{{"format", "clinmcq.manifest"},
              {"tool", "clinmcq"},
              {"version", CLINMCQ_VERSION},
              {"subcommand", m.subcommand},
              {"command", m.command},
              {"config", m.config},
              {"config_hash", m.config_hash},
              {"parameters", m.parameters},
              {"inputs", in},
              {"outputs", out},
              {"summary", m.summary}};
}

inline std::string manifest_path_for(const std::string& artifact) { return artifact + ".manifest.json"; }

inline void write_manifest(const Manifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path);
  out << to_json(m).dump(2) << '\n';
}

}  // namespace clinmcq
