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
#include "tegl/manifest.hpp"

#include <ctime>
#include <fstream>
#include <iterator>

#include "tegl/error.hpp"

namespace tegl {

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"tool", m.tool},       {"version", m.version},         {"command", m.command},
                     {"args", m.args},       {"cwd", m.cwd},                 {"seed", m.seed},
                     {"configs", m.configs}, {"out_dir", m.out_dir},         {"outputs", m.outputs},
                     {"started_at", m.started_at}, {"finished_at", m.finished_at}, {"timings", m.timings}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  m = RunManifest{};
  m.tool = j.value("tool", m.tool);
  m.version = j.value("version", m.version);
  m.command = j.at("command").get<std::string>();
  m.args = j.at("args").get<std::vector<std::string>>();
  m.cwd = j.value("cwd", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  m.configs = j.value("configs", nlohmann::json::object());
  m.out_dir = j.value("out_dir", std::string());
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.started_at = j.value("started_at", std::string());
  m.finished_at = j.value("finished_at", std::string());
  m.timings = j.value("timings", nlohmann::json::object());
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << nlohmann::json(m).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return nlohmann::json::parse(text).get<RunManifest>();
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

bool read_all(const std::filesystem::path& p, std::string& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  out.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return true;
}

}  // namespace

std::vector<FileComparison> compare_outputs(const std::filesystem::path& a, const std::filesystem::path& b,
                                            const std::vector<std::string>& outputs) {
  std::vector<FileComparison> out;
  for (const auto& rel : outputs) {
    FileComparison c{rel, false, ""};
    std::string x, y;
    if (!read_all(a / rel, x)) {
      c.detail = "missing in " + a.string();
    } else if (!read_all(b / rel, y)) {
      c.detail = "missing in " + b.string();
    } else if (x.size() != y.size()) {
      c.detail = "sizes differ: " + std::to_string(x.size()) + " vs " + std::to_string(y.size());
    } else {
      std::size_t i = 0;
      while (i < x.size() && x[i] == y[i]) ++i;
      c.identical = i == x.size();
      if (!c.identical) c.detail = "first difference at byte " + std::to_string(i);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace tegl
