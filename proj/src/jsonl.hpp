// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Record-per-line helpers shared by the file readers. Internal header.

#pragma once

#include <cstddef>
#include <functional>
#include <istream>
#include <string>

#include <json.hpp>

#include "l2i/annotations.hpp"

namespace l2i::detail {

using json = nlohmann::json;

/// Calls `fn(line_no, object)` for every record line. Lines that are blank or
/// start with '#' are skipped. `on_bad(line_no, what)` receives lines that do
/// not hold a JSON object.
inline void for_each_record(std::istream& in,
                            const std::function<void(std::size_t, const json&)>& fn,
                            const std::function<void(std::size_t, const std::string&)>& on_bad) {
  if (!in) throw IoError("input stream is not readable");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      on_bad(line_no, "line is not a well-formed record object");
      continue;
    }
    fn(line_no, obj);
  }
  if (in.bad()) throw IoError("read error after line " + std::to_string(line_no));
}

}  // namespace l2i::detail
