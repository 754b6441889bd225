#pragma once

// Differentiable ops over [C, H, W] feature maps.

#include <span>
#include <string_view>

#include "amcnn/tensor.hpp"

namespace amcnn {

enum class Activation { Relu, Tanh };

// Zero-padded "same" convolution (cross-correlation, as in every CNN
// framework). input [Cin,H,W], weight [Cout,Cin,k,k] with k odd, bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Non-overlapping 2x2 max pooling. H and W must be even. Ties route the
// gradient to the first cell of the window in row-major order.
Tensor maxpool2x2(const Tensor& input);

Tensor relu(const Tensor& input);
Tensor tanh(const Tensor& input);
Tensor activation(const Tensor& input, Activation kind);

// Softmax over all spatial positions of a single-channel map [1,H,W].
Tensor spatial_softmax(const Tensor& input);

// out[c,h,w] = features[c,h,w] * map[0,h,w]
Tensor broadcast_mul(const Tensor& features, const Tensor& map);

// Channel-wise concatenation of [Ci,H,W] maps.
Tensor concat_channels(std::span<const Tensor> parts);

Tensor scale(const Tensor& input, double factor);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Sum of all elements as a one-element tensor.
Tensor sum(const Tensor& input);

}  // namespace amcnn
