#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "unlearn/rng.hpp"
#include "unlearn/tensor.hpp"

namespace unlearn {

// One concrete draw from the augmentation distribution: a crop window into
// the zero-padded image plus an optional horizontal flip. Rescaling to
// [-0.5, 0.5] is always applied last.
struct ImageTransform {
  int offset_y = 0;
  int offset_x = 0;
  bool flip = false;
};

// The augmentation pipeline is order-fixed: pad -> random crop -> random
// horizontal flip -> rescale to [-0.5, 0.5].
struct TransformDistribution {
  int pad = 4;
  int crop_height = 0;  // 0 keeps the input size
  int crop_width = 0;
  double flip_prob = 0.5;

  static TransformDistribution identity() {
    TransformDistribution t;
    t.pad = 0;
    t.flip_prob = 0.0;
    return t;
  }

  // Point-mass distributions never need randomness.
  bool deterministic() const { return pad == 0 && flip_prob <= 0.0; }

  ImageTransform center(int height, int width) const;
  ImageTransform sample(int height, int width, RngStream& stream) const;

  int out_height(int height) const { return crop_height > 0 ? crop_height : height; }
  int out_width(int width) const { return crop_width > 0 ? crop_width : width; }

  void validate(int height, int width) const;
};

// Applies transforms to a batch in raw pixel scale and rescales the result
// to [-0.5, 0.5]. `transforms` holds either one entry (shared by the whole
// batch, as in generator training) or one entry per example (crafting and
// standard training). Input range is not checked here; the augment() wrapper
// below enforces the dataset contract.
Tensor apply_transforms(const Tensor& batch, const TransformDistribution& dist,
                        std::span<const ImageTransform> transforms);

// Routes a gradient in transformed coordinates back to input coordinates:
// the transform is a linear selection map, so this is its exact transpose.
Tensor transforms_backward(const Tensor& grad_out, const TransformDistribution& dist,
                           std::span<const ImageTransform> transforms,
                           const std::vector<std::int64_t>& input_shape);

// Contract-checked single-image augmentation: input must be [1,c,h,w] or
// [c,h,w]-shaped batch slice in [0,1]; output lands in [-0.5, 0.5].
Tensor augment(const Tensor& image, const TransformDistribution& dist, const ImageTransform& t);

}  // namespace unlearn
