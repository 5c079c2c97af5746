/* Copyright 2026 The Tegl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace tegl {

// Record of one command invocation, written next to its outputs.
struct RunManifest {
  std::string tool = "tegl";
  std::string version = TEGL_VERSION;
  std::string command;
  std::vector<std::string> args;  // without the program name
  std::string cwd;
  std::uint64_t seed = 0;
  nlohmann::json configs = nlohmann::json::object();
  std::string out_dir;
  std::vector<std::string> outputs;  // relative to out_dir
  std::string started_at;
  std::string finished_at;
  nlohmann::json timings = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

inline constexpr const char* kManifestName = "manifest.json";

void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

// UTC, second resolution, e.g. 2026-10-15T08:30:00Z.
std::string utc_timestamp();

struct FileComparison {
  std::string path;
  bool identical = false;
  std::string detail;
};

// Byte-for-byte comparison of the same relative paths under two roots.
std::vector<FileComparison> compare_outputs(const std::filesystem::path& a, const std::filesystem::path& b,
                                            const std::vector<std::string>& outputs);

}  // namespace tegl
