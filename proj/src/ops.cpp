#include "amcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "amcnn/error.hpp"
#include "amcnn/simd/kernels.hpp"

namespace amcnn {
namespace {

void require_rank3(const Tensor& t, std::string_view op) {
  if (t.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [C,H,W] tensor, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank3(input, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0) {
    throw ShapeError("conv2d: weight must be [Cout,Cin,k,k] with odd k, got " +
                     shape_string(weight.shape()));
  }
  const std::size_t c_in = input.dim(0);
  const std::size_t height = input.dim(1);
  const std::size_t width = input.dim(2);
  const std::size_t c_out = weight.dim(0);
  const std::size_t k = weight.dim(2);
  if (weight.dim(1) != c_in) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels but input has " + std::to_string(c_in) + " (input " +
                     shape_string(input.shape()) + ", weight " + shape_string(weight.shape()) + ")");
  }
  if (bias.numel() != c_out) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias.numel()) + " entries, expected " +
                     std::to_string(c_out));
  }
  if (height == 0 || width == 0) throw ShapeError("conv2d: empty spatial extent");

  const std::size_t pad = k / 2;
  const std::size_t padded_h = height + 2 * pad;
  const std::size_t padded_w = width + 2 * pad;
  const std::size_t padded_plane = padded_h * padded_w;
  const std::size_t plane = height * width;

  auto padded = std::make_shared<std::vector<double>>(c_in * padded_plane, 0.0);
  {
    const double* src = input.data().data();
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t y = 0; y < height; ++y) {
        std::copy_n(src + (c * height + y) * width, width,
                    padded->data() + c * padded_plane + (y + pad) * padded_w + pad);
      }
    }
  }

  const simd::KernelTable& kern = simd::kernels();
  std::vector<double> out(c_out * plane);
  const double* w = weight.data().data();
  const double* b = bias.data().data();
  const double* pin = padded->data();
  parallel_for(c_out, [&](std::size_t co) {
    double* dst = out.data() + co * plane;
    std::fill_n(dst, plane, b[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* wplane = w + (co * c_in + ci) * k * k;
      const double* src = pin + ci * padded_plane;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t y = 0; y < height; ++y) {
          kern.correlate_row(src + (y + ky) * padded_w, wplane + ky * k, k, dst + y * width, width);
        }
      }
    }
  });

  return Tensor::from_op(
      Shape{c_out, height, width}, std::move(out), {input, weight, bias},
      [=](detail::Node& self) {
        const simd::KernelTable& kern = simd::kernels();
        detail::Node& in_node = *self.inputs[0];
        detail::Node& w_node = *self.inputs[1];
        detail::Node& b_node = *self.inputs[2];
        const double* gout = self.grad.data();

        if (b_node.requires_grad) {
          std::vector<double>& gb = b_node.grad_buffer();
          for (std::size_t co = 0; co < c_out; ++co) gb[co] += kern.sum(gout + co * plane, plane);
        }
        if (w_node.requires_grad) {
          double* gw = w_node.grad_buffer().data();
          const double* pin = padded->data();
          parallel_for(c_out, [&](std::size_t co) {
            for (std::size_t ci = 0; ci < c_in; ++ci) {
              double* gplane = gw + (co * c_in + ci) * k * k;
              const double* src = pin + ci * padded_plane;
              for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t y = 0; y < height; ++y) {
                  kern.correlate_row_weight_grad(gout + co * plane + y * width,
                                                 src + (y + ky) * padded_w, k, gplane + ky * k,
                                                 width);
                }
              }
            }
          });
        }
        if (in_node.requires_grad) {
          std::vector<double>& gin = in_node.grad_buffer();
          const double* wv = w_node.data.data();
          parallel_for(c_in, [&](std::size_t ci) {
            std::vector<double> gpad(padded_plane, 0.0);
            for (std::size_t co = 0; co < c_out; ++co) {
              const double* wplane = wv + (co * c_in + ci) * k * k;
              for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t y = 0; y < height; ++y) {
                  kern.correlate_row_adjoint(gout + co * plane + y * width, wplane + ky * k, k,
                                             gpad.data() + (y + ky) * padded_w, width);
                }
              }
            }
            for (std::size_t y = 0; y < height; ++y) {
              double* dst = gin.data() + (ci * height + y) * width;
              const double* src = gpad.data() + (y + pad) * padded_w + pad;
              for (std::size_t x = 0; x < width; ++x) dst[x] += src[x];
            }
          });
        }
      });
}

Tensor maxpool2x2(const Tensor& input) {
  require_rank3(input, "maxpool2x2");
  const std::size_t channels = input.dim(0);
  const std::size_t height = input.dim(1);
  const std::size_t width = input.dim(2);
  if (height % 2 != 0 || width % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_string(input.shape()));
  }
  const std::size_t out_h = height / 2;
  const std::size_t out_w = width / 2;
  std::vector<double> out(channels * out_h * out_w);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* src = input.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t base = (c * height + 2 * oy) * width + 2 * ox;
        const std::size_t cells[4] = {base, base + 1, base + width, base + width + 1};
        std::size_t best = cells[0];
        for (int i = 1; i < 4; ++i) {
          if (src[cells[i]] > src[best]) best = cells[i];
        }
        const std::size_t o = (c * out_h + oy) * out_w + ox;
        out[o] = src[best];
        (*argmax)[o] = best;
      }
    }
  }
  return Tensor::from_op(Shape{channels, out_h, out_w}, std::move(out), {input},
                         [argmax](detail::Node& self) {
                           std::vector<double>& gin = self.inputs[0]->grad_buffer();
                           for (std::size_t o = 0; o < argmax->size(); ++o) {
                             gin[(*argmax)[o]] += self.grad[o];
                           }
                         });
}

Tensor relu(const Tensor& input) {
  std::vector<double> out(input.numel());
  simd::kernels().relu(input.data().data(), out.data(), out.size());
  return Tensor::from_op(input.shape(), std::move(out), {input}, [](detail::Node& self) {
    detail::Node& in = *self.inputs[0];
    simd::kernels().relu_backward(in.data.data(), self.grad.data(), in.grad_buffer().data(),
                                  in.data.size());
  });
}

Tensor tanh(const Tensor& input) {
  std::vector<double> out(input.numel());
  const auto src = input.data();
  std::transform(src.begin(), src.end(), out.begin(), [](double v) { return std::tanh(v); });
  return Tensor::from_op(input.shape(), std::move(out), {input}, [](detail::Node& self) {
    std::vector<double>& gin = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gin.size(); ++i) {
      gin[i] += (1.0 - self.data[i] * self.data[i]) * self.grad[i];
    }
  });
}

Tensor activation(const Tensor& input, Activation kind) {
  return kind == Activation::Relu ? relu(input) : tanh(input);
}

Tensor spatial_softmax(const Tensor& input) {
  require_rank3(input, "spatial_softmax");
  if (input.dim(0) != 1) {
    throw ShapeError("spatial_softmax: expected a single channel, got " +
                     shape_string(input.shape()));
  }
  const auto src = input.data();
  const double peak = *std::max_element(src.begin(), src.end());
  std::vector<double> out(src.size());
  double total = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = std::exp(src[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return Tensor::from_op(input.shape(), std::move(out), {input}, [](detail::Node& self) {
    // d/dx_i = y_i * (g_i - sum_j g_j y_j)
    const double inner = simd::kernels().dot(self.grad.data(), self.data.data(), self.data.size());
    std::vector<double>& gin = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < gin.size(); ++i) {
      gin[i] += self.data[i] * (self.grad[i] - inner);
    }
  });
}

Tensor broadcast_mul(const Tensor& features, const Tensor& map) {
  require_rank3(features, "broadcast_mul");
  require_rank3(map, "broadcast_mul");
  if (map.dim(0) != 1 || map.dim(1) != features.dim(1) || map.dim(2) != features.dim(2)) {
    throw ShapeError("broadcast_mul: map " + shape_string(map.shape()) +
                     " does not match features " + shape_string(features.shape()));
  }
  const std::size_t channels = features.dim(0);
  const std::size_t plane = features.dim(1) * features.dim(2);
  std::vector<double> out(features.numel());
  const double* f = features.data().data();
  const double* m = map.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = f[c * plane + i] * m[i];
  }
  return Tensor::from_op(features.shape(), std::move(out), {features, map},
                         [channels, plane](detail::Node& self) {
                           detail::Node& f_node = *self.inputs[0];
                           detail::Node& m_node = *self.inputs[1];
                           const double* g = self.grad.data();
                           if (f_node.requires_grad) {
                             std::vector<double>& gf = f_node.grad_buffer();
                             for (std::size_t c = 0; c < channels; ++c) {
                               for (std::size_t i = 0; i < plane; ++i) {
                                 gf[c * plane + i] += g[c * plane + i] * m_node.data[i];
                               }
                             }
                           }
                           if (m_node.requires_grad) {
                             std::vector<double>& gm = m_node.grad_buffer();
                             for (std::size_t c = 0; c < channels; ++c) {
                               for (std::size_t i = 0; i < plane; ++i) {
                                 gm[i] += g[c * plane + i] * f_node.data[c * plane + i];
                               }
                             }
                           }
                         });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  std::size_t channels = 0;
  for (const Tensor& p : parts) {
    require_rank3(p, "concat_channels");
    if (p.dim(1) != parts[0].dim(1) || p.dim(2) != parts[0].dim(2)) {
      throw ShapeError("concat_channels: spatial mismatch " + shape_string(p.shape()) + " vs " +
                       shape_string(parts[0].shape()));
    }
    channels += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(channels * parts[0].dim(1) * parts[0].dim(2));
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor::from_op(Shape{channels, parts[0].dim(1), parts[0].dim(2)}, std::move(out),
                         std::vector<Tensor>(parts.begin(), parts.end()), [](detail::Node& self) {
                           std::size_t offset = 0;
                           for (auto& in : self.inputs) {
                             const std::size_t n = in->data.size();
                             if (in->requires_grad) {
                               std::vector<double>& g = in->grad_buffer();
                               for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                             }
                             offset += n;
                           }
                         });
}

Tensor scale(const Tensor& input, double factor) {
  std::vector<double> out(input.data().begin(), input.data().end());
  for (double& v : out) v *= factor;
  return Tensor::from_op(input.shape(), std::move(out), {input}, [factor](detail::Node& self) {
    simd::kernels().axpy(factor, self.grad.data(), self.inputs[0]->grad_buffer().data(),
                         self.grad.size());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      std::vector<double>& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node& lhs = *self.inputs[0];
    detail::Node& rhs = *self.inputs[1];
    if (lhs.requires_grad) {
      std::vector<double>& g = lhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * rhs.data[i];
    }
    if (rhs.requires_grad) {
      std::vector<double>& g = rhs.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * lhs.data[i];
    }
  });
}

Tensor sum(const Tensor& input) {
  const double total = simd::kernels().sum(input.data().data(), input.numel());
  return Tensor::from_op(Shape{1}, {total}, {input}, [](detail::Node& self) {
    std::vector<double>& g = self.inputs[0]->grad_buffer();
    const double upstream = self.grad[0];
    for (double& v : g) v += upstream;
  });
}

}  // namespace amcnn
