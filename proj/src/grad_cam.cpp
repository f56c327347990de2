/*
 * Copyright 2026 The reid-bench Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "reidbench/grad_cam.hpp"

#include <algorithm>
#include <cmath>

namespace reidbench {

template <typename Scalar>
std::vector<std::string> grad_cam_layers(const VerificationNet<Scalar>& model) {
  std::vector<std::string> out;
  const auto& enc = model.encoder();
  for (size_t i = 0; i < enc.size(); ++i)
    if (enc.layer(i).kind() == "conv2d") out.push_back(enc.name(i));
  return out;
}

namespace {

template <typename Scalar>
AttentionMap branch_map(const VerificationNet<Scalar>& model, const FeatureMaps<Scalar>& x,
                        const MatrixX<Scalar>& dz, size_t layer, const std::string& layer_id) {
  const auto& enc = model.encoder();
  const VectorX<Scalar>& params = model.parameters();
  std::span<const Scalar> p(params.data(), static_cast<size_t>(params.size()));
  nn::Tape<Scalar> tape;
  tape.record_outputs = true;
  enc.forward(p, x, &tape);

  VectorX<Scalar> scratch = VectorX<Scalar>::Zero(params.size());
  MatrixX<Scalar> gradient;
  enc.backward(p, FeatureMaps<Scalar>({1, kEmbeddingDim, 1, 1}, dz), tape,
               {scratch.data(), static_cast<size_t>(scratch.size())},
               [&](size_t i, const FeatureMaps<Scalar>& g) {
                 if (i == layer) gradient = g.data;
               });

  const FeatureMaps<Scalar>& act = tape.outputs[layer];
  const Index h = act.shape.height, w = act.shape.width;
  const VectorX<Scalar> alpha = gradient.rowwise().mean();
  const RowVectorX<Scalar> cam = (alpha.transpose() * act.data).cwiseMax(Scalar(0));

  Plane<double> small(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index xx = 0; xx < w; ++xx) small(y, xx) = static_cast<double>(cam(y * w + xx));
  Plane<double> up = resize_bilinear(small, x.shape.height, x.shape.width);
  up = up.cwiseMax(0.0);
  const double peak = up.maxCoeff();
  if (peak > 0) up /= peak;
  return {std::move(up), layer_id};
}

}  // namespace

template <typename Scalar>
std::pair<AttentionMap, AttentionMap> grad_cam(const VerificationNet<Scalar>& model,
                                               const FeatureMaps<Scalar>& x1,
                                               const FeatureMaps<Scalar>& x2,
                                               const std::string& layer_id) {
  const auto valid = grad_cam_layers(model);
  if (std::find(valid.begin(), valid.end(), layer_id) == valid.end()) {
    std::string list;
    for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
    throw ConfigError("unknown Grad-CAM layer '" + layer_id + "' (valid: " + list + ")");
  }
  if (x1.shape.batch != 1 || x2.shape.batch != 1)
    throw ShapeError("grad_cam expects single images");
  model.check_input(x1);
  model.check_input(x2);
  const size_t layer = *model.encoder().find(layer_id);
  const MatrixX<Scalar> z1 = model.encode(x1), z2 = model.encode(x2);
  MatrixX<Scalar> dz1, dz2;
  model.score_gradient_wrt_encodings(z1, z2, dz1, dz2);
  return {branch_map(model, x1, dz1, layer, layer_id), branch_map(model, x2, dz2, layer, layer_id)};
}

Raster overlay_heatmap(const Raster& base, const AttentionMap& map, double alpha) {
  if (base.height != map.values.rows() || base.width != map.values.cols())
    throw ShapeError("overlay size mismatch");
  Raster out{base.height, base.width, 3, std::vector<std::uint8_t>(size_t(base.height * base.width * 3))};
  for (Index y = 0; y < base.height; ++y)
    for (Index x = 0; x < base.width; ++x) {
      const double g = base.at(y, x, 0) / 255.0;
      const double v = std::clamp(map.values(y, x), 0.0, 1.0);
      // blue -> green -> red ramp
      const double heat[3] = {std::clamp(2 * v - 1, 0.0, 1.0), 1 - std::abs(2 * v - 1),
                              std::clamp(1 - 2 * v, 0.0, 1.0)};
      for (int c = 0; c < 3; ++c) {
        const double mixed = (1 - alpha) * g + alpha * heat[c];
        out.pixels[size_t((y * base.width + x) * 3 + c)] =
            static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(mixed, 0.0, 1.0)));
      }
    }
  return out;
}

template std::vector<std::string> grad_cam_layers<float>(const VerificationNet<float>&);
template std::vector<std::string> grad_cam_layers<double>(const VerificationNet<double>&);
template std::pair<AttentionMap, AttentionMap> grad_cam<float>(const VerificationNet<float>&,
                                                               const FeatureMaps<float>&,
                                                               const FeatureMaps<float>&,
                                                               const std::string&);
template std::pair<AttentionMap, AttentionMap> grad_cam<double>(const VerificationNet<double>&,
                                                                const FeatureMaps<double>&,
                                                                const FeatureMaps<double>&,
                                                                const std::string&);

}  // namespace reidbench
