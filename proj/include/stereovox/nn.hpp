#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace svx::nn {

/// Dense float tensor, contiguous, channel-first.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f);

  std::size_t numel() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  void zero();
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<int>& shape);

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Adam moments
  Tensor m;
  Tensor v;
};

/// Owns every trainable tensor; addresses stay stable as parameters are added.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, std::vector<int> shape);
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::int64_t count() const;
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

/// Box-Muller normal from the raw engine output (platform-stable sequence).
double normal(std::mt19937_64& rng);

/// Sites of a cubic grid where a sparse layer computes; `mask` has one byte per site.
struct ActiveSet {
  int resolution = 0;
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> sites;

  static ActiveSet all(int resolution);
  static ActiveSet from_mask(int resolution, std::vector<std::uint8_t> mask);
  /// Each parent site replicated to its 2x2x2 children.
  ActiveSet upsample() const;
  std::size_t count() const { return sites.size(); }
  std::size_t total() const { return mask.size(); }
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step_count = 0;

  void step(ParameterStore& params);
};

/// 2D convolution, square kernel, zero padding. Input [Ci, H, W].
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& ps, const std::string& name, int cin, int cout, int kernel, int stride, int pad);
  void init(std::mt19937_64& rng);

  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
  Tensor forward(const Tensor& in) const;
  /// Accumulates parameter gradients; writes the input gradient when requested.
  void backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const;
  std::int64_t macs(int out_h, int out_w) const {
    return static_cast<std::int64_t>(k_) * k_ * cin_ * cout_ * out_h * out_w;
  }
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  Parameter* w_ = nullptr;  // [Co, Ci, k, k]
  Parameter* b_ = nullptr;  // [Co]
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
};

/// 1x1 convolution over any flattened spatial extent. Input [Ci, N].
class Pointwise {
 public:
  Pointwise() = default;
  Pointwise(ParameterStore& ps, const std::string& name, int cin, int cout);
  void init(std::mt19937_64& rng, float bias = 0.0f);

  Tensor forward(const Tensor& in) const;
  /// Only sites in `active` are computed; other outputs are zero.
  Tensor forward_sparse(const Tensor& in, const ActiveSet& active) const;
  void backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const;
  void backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active, Tensor* grad_in) const;
  std::int64_t macs(std::int64_t sites) const { return static_cast<std::int64_t>(cin_) * cout_ * sites; }
  int cin() const { return cin_; }
  int cout() const { return cout_; }
  Parameter& weight() { return *w_; }

 private:
  Parameter* w_ = nullptr;  // [Co, Ci]
  Parameter* b_ = nullptr;  // [Co]
  int cin_ = 0, cout_ = 0;
};

/// 3x3x3 convolution, stride 1, zero padding 1 (submanifold when sparse). Input [Ci, r, r, r].
class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParameterStore& ps, const std::string& name, int cin, int cout);
  void init(std::mt19937_64& rng);

  Tensor forward(const Tensor& in) const;
  /// Outputs only at active sites, reading only active neighbours.
  Tensor forward_sparse(const Tensor& in, const ActiveSet& active) const;
  void backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const;
  void backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active, Tensor* grad_in) const;
  std::int64_t macs(std::int64_t sites) const { return 27LL * cin_ * cout_ * sites; }
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  Parameter* w_ = nullptr;  // [Co, Ci, 27]
  Parameter* b_ = nullptr;  // [Co]
  int cin_ = 0, cout_ = 0;
};

/// Transposed 3D convolution, kernel 2, stride 2: r^3 -> (2r)^3. Input [Ci, r, r, r].
class Deconv3d {
 public:
  Deconv3d() = default;
  Deconv3d(ParameterStore& ps, const std::string& name, int cin, int cout);
  void init(std::mt19937_64& rng);

  Tensor forward(const Tensor& in) const;
  /// `active` indexes output sites.
  Tensor forward_sparse(const Tensor& in, const ActiveSet& active) const;
  void backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const;
  void backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active, Tensor* grad_in) const;
  /// One kernel tap reaches each output site.
  std::int64_t macs(std::int64_t out_sites) const { return static_cast<std::int64_t>(cin_) * cout_ * out_sites; }
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  Parameter* w_ = nullptr;  // [Co, Ci, 8]
  Parameter* b_ = nullptr;  // [Co]
  int cin_ = 0, cout_ = 0;
};

/// Fully connected layer on a flat vector.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& ps, const std::string& name, int in, int out);
  void init(std::mt19937_64& rng, double gain = 2.0);

  std::vector<float> forward(std::span<const float> x) const;
  void backward(std::span<const float> x, std::span<const float> grad_out, std::vector<float>* grad_in) const;
  std::int64_t macs() const { return static_cast<std::int64_t>(in_) * out_; }
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Parameter* w_ = nullptr;  // [out, in]
  Parameter* b_ = nullptr;  // [out]
  int in_ = 0, out_ = 0;
};

void relu_inplace(std::span<float> x);
/// grad *= (activation > 0)
void relu_backward(std::span<const float> activation, std::span<float> grad);
/// Multiply each channel plane by the site mask.
void apply_mask(Tensor& t, const ActiveSet& active);
float sigmoid(float x);
/// Zero mean, unit variance over the whole vector in place; returns 1/std.
float standardize_inplace(std::span<float> x);
/// Turns dLoss/dy into dLoss/dx for y = standardize(x), given y and 1/std.
void standardize_backward(std::span<const float> y, float inv_std, std::span<float> grad);

}  // namespace svx::nn
