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

#include "l2i/losses.hpp"

#include <fstream>
#include <sstream>

namespace l2i {

namespace {

// Next non-empty, non-comment line split into whitespace tokens.
std::istringstream next_row(std::istream& in, std::size_t& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return std::istringstream(line);
  }
  throw LossError("loss fixture truncated after line " + std::to_string(line_no));
}

Grid<double> read_grid(std::istream& in, Eigen::Index h, Eigen::Index w, std::size_t& line_no) {
  Grid<double> g(h, w);
  for (Eigen::Index r = 0; r < h; ++r) {
    auto row = next_row(in, line_no);
    for (Eigen::Index c = 0; c < w; ++c) {
      if (!(row >> g(r, c))) throw LossError("loss fixture line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(w) + " values");
    }
    std::string extra;
    if (row >> extra) throw LossError("loss fixture line " + std::to_string(line_no) + ": too many values");
  }
  return g;
}

}  // namespace

LossFixture read_loss_fixture(std::istream& in) {
  std::size_t line_no = 0;
  auto header = next_row(in, line_no);
  long h = 0, w = 0, count = 0;
  if (!(header >> h >> w >> count) || h < 1 || w < 1 || count < 1) {
    throw LossError("loss fixture header must be 'H W count' with positive values");
  }
  LossFixture f;
  for (long k = 0; k < count; ++k) {
    f.maps.emplace_back(read_grid(in, h, w, line_no));
    f.masks.emplace_back(read_grid(in, h, w, line_no));
  }
  return f;
}

LossFixture read_loss_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LossError("cannot open loss fixture: " + path);
  return read_loss_fixture(in);
}

void write_loss_fixture(std::ostream& out, const LossFixture& f) {
  if (f.maps.empty() || f.maps.size() != f.masks.size()) throw LossError("fixture needs matching maps and masks");
  const auto h = f.maps.front().rows();
  const auto w = f.maps.front().cols();
  out << h << ' ' << w << ' ' << f.maps.size() << '\n';
  out.precision(17);
  auto dump = [&](const Grid<double>& g) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) out << (c ? " " : "") << g(r, c);
      out << '\n';
    }
  };
  for (std::size_t k = 0; k < f.maps.size(); ++k) {
    detail::check_same_shape(f.maps[k], f.maps.front());
    detail::check_same_shape(f.maps[k], f.masks[k]);
    dump(f.maps[k].values());
    dump(f.masks[k].values());
  }
}

}  // namespace l2i
