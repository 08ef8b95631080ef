//------------------------------------------------------------------------------
//
//   Copyright 2026 The CED Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ced/io.hpp"
#include "ced/tensor.hpp"

namespace ced {

/// Perceptually uniform colormap: five anchors, linear interpolation.
inline std::array<std::uint8_t, 3> heat_color(double v) {
  static constexpr double anchors[5][3] = {{68, 1, 84},
                                           {59, 82, 139},
                                           {33, 145, 140},
                                           {94, 201, 98},
                                           {253, 231, 37}};
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * 4.0;
  const std::size_t lo = std::min<std::size_t>(3, static_cast<std::size_t>(pos));
  const double frac = pos - static_cast<double>(lo);
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double x =
        anchors[lo][c] + frac * (anchors[lo + 1][c] - anchors[lo][c]);
    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(x + 0.5);
  }
  return rgb;
}

/// Writes an [H x W] matrix of values in [0,1] as a binary PPM (P6) image,
/// scaled up by an integer pixel factor for legibility.
template <typename Real>
void write_heatmap_ppm(const std::filesystem::path &path,
                       const Tensor<Real> &matrix, std::size_t pixel_scale = 4) {
  const std::size_t h = matrix.rows(), w = matrix.cols();
  const std::size_t ph = h * pixel_scale, pw = w * pixel_scale;
  std::string out = "P6\n" + std::to_string(pw) + " " + std::to_string(ph) +
                    "\n255\n";
  out.reserve(out.size() + ph * pw * 3);
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) {
      const auto rgb = heat_color(
          static_cast<double>(matrix(y / pixel_scale, x / pixel_scale)));
      out.push_back(static_cast<char>(rgb[0]));
      out.push_back(static_cast<char>(rgb[1]));
      out.push_back(static_cast<char>(rgb[2]));
    }
  }
  io::write_file_atomic(path, out);
}

}  // namespace ced
