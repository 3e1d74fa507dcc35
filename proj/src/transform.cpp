#include "unlearn/transform.hpp"

#include <string>

#include "unlearn/common.hpp"

namespace unlearn {

void TransformDistribution::validate(int height, int width) const {
  check_config(pad >= 0, "augmentation pad must be nonnegative");
  check_config(flip_prob >= 0.0 && flip_prob <= 1.0, "flip probability must be in [0,1]");
  check_config(out_height(height) <= height + 2 * pad && out_width(width) <= width + 2 * pad,
               "crop size exceeds padded image");
}

ImageTransform TransformDistribution::center(int height, int width) const {
  ImageTransform t;
  t.offset_y = (height + 2 * pad - out_height(height)) / 2;
  t.offset_x = (width + 2 * pad - out_width(width)) / 2;
  t.flip = false;
  return t;
}

ImageTransform TransformDistribution::sample(int height, int width, RngStream& stream) const {
  ImageTransform t;
  const int range_y = height + 2 * pad - out_height(height) + 1;
  const int range_x = width + 2 * pad - out_width(width) + 1;
  t.offset_y = range_y > 1 ? static_cast<int>(stream.below(static_cast<std::uint64_t>(range_y))) : 0;
  t.offset_x = range_x > 1 ? static_cast<int>(stream.below(static_cast<std::uint64_t>(range_x))) : 0;
  t.flip = flip_prob > 0.0 && stream.next_double() < flip_prob;
  return t;
}

Tensor apply_transforms(const Tensor& batch, const TransformDistribution& dist,
                        std::span<const ImageTransform> transforms) {
  check_contract(batch.rank() == 4, "apply_transforms: expected a rank-4 batch");
  const std::int64_t n = batch.dim(0);
  const std::int64_t c = batch.dim(1);
  const std::int64_t h = batch.dim(2);
  const std::int64_t w = batch.dim(3);
  check_contract(transforms.size() == 1 || transforms.size() == static_cast<std::size_t>(n),
                 "apply_transforms: need one transform or one per example");
  const std::int64_t oh = dist.out_height(static_cast<int>(h));
  const std::int64_t ow = dist.out_width(static_cast<int>(w));

  Tensor out({n, c, oh, ow});
  for (std::int64_t i = 0; i < n; ++i) {
    const ImageTransform& t = transforms[transforms.size() == 1 ? 0 : i];
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const std::int64_t sy = oy + t.offset_y - dist.pad;
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const std::int64_t raw_x = ox + t.offset_x - dist.pad;
          const std::int64_t sx = t.flip ? (w - 1 - raw_x) : raw_x;
          float v = 0.0f;  // zero padding
          if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = batch.at(i, ch, sy, sx);
          out.at(i, ch, oy, ox) = v - 0.5f;
        }
      }
    }
  }
  return out;
}

Tensor transforms_backward(const Tensor& grad_out, const TransformDistribution& dist,
                           std::span<const ImageTransform> transforms,
                           const std::vector<std::int64_t>& input_shape) {
  check_contract(grad_out.rank() == 4, "transforms_backward: expected a rank-4 gradient");
  const std::int64_t n = grad_out.dim(0);
  const std::int64_t c = grad_out.dim(1);
  const std::int64_t oh = grad_out.dim(2);
  const std::int64_t ow = grad_out.dim(3);
  const std::int64_t h = input_shape[2];
  const std::int64_t w = input_shape[3];

  Tensor grad_in(input_shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const ImageTransform& t = transforms[transforms.size() == 1 ? 0 : i];
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const std::int64_t sy = oy + t.offset_y - dist.pad;
        if (sy < 0 || sy >= h) continue;
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const std::int64_t raw_x = ox + t.offset_x - dist.pad;
          const std::int64_t sx = t.flip ? (w - 1 - raw_x) : raw_x;
          if (sx < 0 || sx >= w) continue;
          grad_in.at(i, ch, sy, sx) += grad_out.at(i, ch, oy, ox);
        }
      }
    }
  }
  return grad_in;
}

Tensor augment(const Tensor& image, const TransformDistribution& dist, const ImageTransform& t) {
  check_contract(image.rank() == 4 && image.dim(0) == 1,
                 "augment: expected a single [1,c,h,w] image");
  for (std::int64_t i = 0; i < image.size(); ++i) {
    check_contract(image[i] >= 0.0f && image[i] <= 1.0f,
                   "augment: pixel " + std::to_string(i) + " outside raw [0,1] scale");
  }
  return apply_transforms(image, dist, {&t, 1});
}

}  // namespace unlearn
