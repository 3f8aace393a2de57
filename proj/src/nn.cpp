#include "stereovox/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace svx::nn {

// Every forward kernel accumulates an output element as
//   bias, then taps in kernel-offset order, then input channels in order,
// in both the dense and the sparse variant. Masked inputs are exact zeros, so
// skipping them leaves the sum bit-identical.

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  data.assign(n, fill);
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0f); }

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

Parameter& ParameterStore::create(const std::string& name, std::vector<int> shape) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name " + name);
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  p.m = Tensor(shape);
  p.v = Tensor(std::move(shape));
  return p;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

std::int64_t ParameterStore::count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += static_cast<std::int64_t>(p.value.numel());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.zero();
}

double normal(std::mt19937_64& rng) {
  const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace {

void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  for (auto& v : t.data) v = static_cast<float>(stddev * normal(rng));
}

void expect_shape(const Tensor& t, std::size_t rank, int channels, const char* layer) {
  if (t.shape.size() != rank || t.shape[0] != channels)
    throw std::invalid_argument(std::string(layer) + ": input shape " + shape_string(t.shape) + " expects " +
                                std::to_string(channels) + " channels, rank " + std::to_string(rank));
}

// Output coordinate range [lo, hi) for which c + d stays inside [0, r).
inline int lo_of(int d) { return std::max(0, -d); }
inline int hi_of(int d, int r) { return std::min(r, r - d); }

}  // namespace

ActiveSet ActiveSet::all(int resolution) {
  const std::size_t n = static_cast<std::size_t>(resolution) * resolution * resolution;
  ActiveSet a;
  a.resolution = resolution;
  a.mask.assign(n, 1);
  a.sites.resize(n);
  std::iota(a.sites.begin(), a.sites.end(), 0);
  return a;
}

ActiveSet ActiveSet::from_mask(int resolution, std::vector<std::uint8_t> mask) {
  if (mask.size() != static_cast<std::size_t>(resolution) * resolution * resolution)
    throw std::invalid_argument("active mask size does not match resolution");
  ActiveSet a;
  a.resolution = resolution;
  a.mask = std::move(mask);
  for (std::size_t i = 0; i < a.mask.size(); ++i)
    if (a.mask[i]) a.sites.push_back(static_cast<std::int32_t>(i));
  return a;
}

ActiveSet ActiveSet::upsample() const {
  const int r = resolution, R = 2 * r;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(R) * R * R, 0);
  for (int z = 0; z < R; ++z)
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x)
        m[(static_cast<std::size_t>(z) * R + y) * R + x] =
            mask[(static_cast<std::size_t>(z / 2) * r + y / 2) * r + x / 2];
  return from_mask(R, std::move(m));
}

void Adam::step(ParameterStore& params) {
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  const auto b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const auto step_size = static_cast<float>(lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto e = static_cast<float>(eps);
  for (auto& p : params.all()) {
    float* w = p.value.ptr();
    const float* g = p.grad.ptr();
    float* m = p.m.ptr();
    float* v = p.v.ptr();
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_bc2) + e);
    }
  }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(ParameterStore& ps, const std::string& name, int cin, int cout, int kernel, int stride, int pad)
    : cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
  w_ = &ps.create(name + ".weight", {cout, cin, kernel, kernel});
  b_ = &ps.create(name + ".bias", {cout});
}

void Conv2d::init(std::mt19937_64& rng) {
  fill_normal(w_->value, rng, std::sqrt(2.0 / (cin_ * k_ * k_)));
  b_->value.zero();
}

Tensor Conv2d::forward(const Tensor& in) const {
  expect_shape(in, 3, cin_, "conv2d");
  const int H = in.dim(1), W = in.dim(2);
  const int Ho = out_size(H), Wo = out_size(W);
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: input too small");
  Tensor out({cout_, Ho, Wo});
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    float* o = out.ptr() + static_cast<std::size_t>(co) * Ho * Wo;
    std::fill(o, o + static_cast<std::size_t>(Ho) * Wo, b_->value.data[co]);
    for (int ci = 0; ci < cin_; ++ci) {
      const float* src = in.ptr() + static_cast<std::size_t>(ci) * H * W;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const float w = wt[((static_cast<std::size_t>(co) * cin_ + ci) * k_ + ky) * k_ + kx];
          const int ox_lo = std::max(0, (pad_ - kx + stride_ - 1) / stride_);
          const int ox_hi = std::min(Wo, (W - 1 - kx + pad_) / stride_ + 1);
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= H) continue;
            float* orow = o + static_cast<std::size_t>(oy) * Wo;
            const float* irow = src + static_cast<std::size_t>(iy) * W + kx - pad_;
            if (stride_ == 1) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += w * irow[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += w * irow[ox * stride_];
            }
          }
        }
    }
  }
  return out;
}

void Conv2d::backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const {
  const int H = in.dim(1), W = in.dim(2);
  const int Ho = grad_out.dim(1), Wo = grad_out.dim(2);
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  for (int co = 0; co < cout_; ++co) {
    const float* g = grad_out.ptr() + static_cast<std::size_t>(co) * Ho * Wo;
    float gb = 0.0f;
    for (int i = 0; i < Ho * Wo; ++i) gb += g[i];
    b_->grad.data[co] += gb;
    for (int ci = 0; ci < cin_; ++ci) {
      const float* src = in.ptr() + static_cast<std::size_t>(ci) * H * W;
      float* gsrc = grad_in ? grad_in->ptr() + static_cast<std::size_t>(ci) * H * W : nullptr;
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(co) * cin_ + ci) * k_ + ky) * k_ + kx;
          const float w = wt[widx];
          const int ox_lo = std::max(0, (pad_ - kx + stride_ - 1) / stride_);
          const int ox_hi = std::min(Wo, (W - 1 - kx + pad_) / stride_ + 1);
          float acc = 0.0f;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= H) continue;
            const float* grow = g + static_cast<std::size_t>(oy) * Wo;
            const std::size_t ioff = static_cast<std::size_t>(iy) * W + kx - pad_;
            const float* irow = src + ioff;
            for (int ox = ox_lo; ox < ox_hi; ++ox) acc += grow[ox] * irow[ox * stride_];
            if (gsrc) {
              float* girow = gsrc + ioff;
              for (int ox = ox_lo; ox < ox_hi; ++ox) girow[ox * stride_] += w * grow[ox];
            }
          }
          gw[widx] += acc;
        }
    }
  }
}

// ---------------------------------------------------------------------------
// Pointwise

Pointwise::Pointwise(ParameterStore& ps, const std::string& name, int cin, int cout) : cin_(cin), cout_(cout) {
  w_ = &ps.create(name + ".weight", {cout, cin});
  b_ = &ps.create(name + ".bias", {cout});
}

void Pointwise::init(std::mt19937_64& rng, float bias) {
  fill_normal(w_->value, rng, std::sqrt(2.0 / cin_));
  std::fill(b_->value.data.begin(), b_->value.data.end(), bias);
}

namespace {

std::vector<int> with_channels(const std::vector<int>& shape, int c) {
  auto s = shape;
  s[0] = c;
  return s;
}

std::size_t spatial(const Tensor& t) { return t.numel() / static_cast<std::size_t>(t.shape[0]); }

}  // namespace

Tensor Pointwise::forward(const Tensor& in) const {
  if (in.shape.empty() || in.shape[0] != cin_) throw std::invalid_argument("pointwise: channel mismatch");
  const std::size_t N = spatial(in);
  Tensor out(with_channels(in.shape, cout_));
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    float* o = out.ptr() + co * N;
    std::fill(o, o + N, b_->value.data[co]);
    for (int ci = 0; ci < cin_; ++ci) {
      const float w = wt[static_cast<std::size_t>(co) * cin_ + ci];
      const float* src = in.ptr() + ci * N;
      for (std::size_t s = 0; s < N; ++s) o[s] += w * src[s];
    }
  }
  return out;
}

Tensor Pointwise::forward_sparse(const Tensor& in, const ActiveSet& active) const {
  if (in.shape.empty() || in.shape[0] != cin_) throw std::invalid_argument("pointwise: channel mismatch");
  const std::size_t N = spatial(in);
  if (active.total() != N) throw std::invalid_argument("pointwise: active set size mismatch");
  Tensor out(with_channels(in.shape, cout_));
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    float* o = out.ptr() + co * N;
    const float* wrow = wt + static_cast<std::size_t>(co) * cin_;
    for (const auto s : active.sites) {
      float acc = b_->value.data[co];
      for (int ci = 0; ci < cin_; ++ci) acc += wrow[ci] * in.data[ci * N + s];
      o[s] = acc;
    }
  }
  return out;
}

void Pointwise::backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const {
  const std::size_t N = spatial(in);
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    const float* g = grad_out.ptr() + co * N;
    float gb = 0.0f;
    for (std::size_t s = 0; s < N; ++s) gb += g[s];
    b_->grad.data[co] += gb;
    for (int ci = 0; ci < cin_; ++ci) {
      const float* src = in.ptr() + ci * N;
      const std::size_t widx = static_cast<std::size_t>(co) * cin_ + ci;
      float acc = 0.0f;
      for (std::size_t s = 0; s < N; ++s) acc += g[s] * src[s];
      w_->grad.data[widx] += acc;
      if (grad_in) {
        float* gi = grad_in->ptr() + ci * N;
        const float w = wt[widx];
        for (std::size_t s = 0; s < N; ++s) gi[s] += w * g[s];
      }
    }
  }
}

void Pointwise::backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active,
                                Tensor* grad_in) const {
  const std::size_t N = spatial(in);
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    const float* g = grad_out.ptr() + co * N;
    const float* wrow = wt + static_cast<std::size_t>(co) * cin_;
    float* gwrow = w_->grad.ptr() + static_cast<std::size_t>(co) * cin_;
    float gb = 0.0f;
    for (const auto s : active.sites) {
      const float gs = g[s];
      if (gs == 0.0f) continue;
      gb += gs;
      for (int ci = 0; ci < cin_; ++ci) {
        gwrow[ci] += gs * in.data[ci * N + s];
        if (grad_in) grad_in->data[ci * N + s] += wrow[ci] * gs;
      }
    }
    b_->grad.data[co] += gb;
  }
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(ParameterStore& ps, const std::string& name, int cin, int cout) : cin_(cin), cout_(cout) {
  w_ = &ps.create(name + ".weight", {cout, cin, 27});
  b_ = &ps.create(name + ".bias", {cout});
}

void Conv3d::init(std::mt19937_64& rng) {
  fill_normal(w_->value, rng, std::sqrt(2.0 / (27.0 * cin_)));
  b_->value.zero();
}

Tensor Conv3d::forward(const Tensor& in) const {
  expect_shape(in, 4, cin_, "conv3d");
  const int r = in.dim(1);
  const std::size_t N = static_cast<std::size_t>(r) * r * r;
  Tensor out({cout_, r, r, r});
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    float* o = out.ptr() + co * N;
    std::fill(o, o + N, b_->value.data[co]);
    for (int off = 0; off < 27; ++off) {
      const int dz = off / 9 - 1, dy = (off / 3) % 3 - 1, dx = off % 3 - 1;
      const int zl = lo_of(dz), zh = hi_of(dz, r), yl = lo_of(dy), yh = hi_of(dy, r), xl = lo_of(dx),
                xh = hi_of(dx, r);
      for (int ci = 0; ci < cin_; ++ci) {
        const float w = wt[(static_cast<std::size_t>(co) * cin_ + ci) * 27 + off];
        const float* src = in.ptr() + ci * N;
        for (int z = zl; z < zh; ++z)
          for (int y = yl; y < yh; ++y) {
            float* orow = o + (static_cast<std::size_t>(z) * r + y) * r;
            const float* irow = src + (static_cast<std::size_t>(z + dz) * r + (y + dy)) * r + dx;
            for (int x = xl; x < xh; ++x) orow[x] += w * irow[x];
          }
      }
    }
  }
  return out;
}

namespace {

// Neighbour site index per kernel offset, -1 when outside or inactive.
inline void gather_neighbours(int site, int r, const std::vector<std::uint8_t>& mask, int nb[27]) {
  const int x = site % r, y = (site / r) % r, z = site / (r * r);
  for (int off = 0; off < 27; ++off) {
    const int zz = z + off / 9 - 1, yy = y + (off / 3) % 3 - 1, xx = x + off % 3 - 1;
    if (zz < 0 || yy < 0 || xx < 0 || zz >= r || yy >= r || xx >= r) {
      nb[off] = -1;
      continue;
    }
    const int n = (zz * r + yy) * r + xx;
    nb[off] = mask[static_cast<std::size_t>(n)] ? n : -1;
  }
}

}  // namespace

Tensor Conv3d::forward_sparse(const Tensor& in, const ActiveSet& active) const {
  expect_shape(in, 4, cin_, "conv3d");
  const int r = in.dim(1);
  if (active.resolution != r) throw std::invalid_argument("conv3d: active set resolution mismatch");
  const std::size_t N = static_cast<std::size_t>(r) * r * r;
  Tensor out({cout_, r, r, r});
  const float* wt = w_->value.ptr();
  int nb[27];
  for (const auto s : active.sites) {
    gather_neighbours(s, r, active.mask, nb);
    for (int co = 0; co < cout_; ++co) {
      float acc = b_->value.data[co];
      const float* wco = wt + static_cast<std::size_t>(co) * cin_ * 27;
      for (int off = 0; off < 27; ++off) {
        if (nb[off] < 0) continue;
        const float* src = in.ptr() + nb[off];
        for (int ci = 0; ci < cin_; ++ci) acc += wco[ci * 27 + off] * src[ci * N];
      }
      out.data[co * N + s] = acc;
    }
  }
  return out;
}

void Conv3d::backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const {
  const int r = in.dim(1);
  const std::size_t N = static_cast<std::size_t>(r) * r * r;
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  for (int co = 0; co < cout_; ++co) {
    const float* g = grad_out.ptr() + co * N;
    float gb = 0.0f;
    for (std::size_t s = 0; s < N; ++s) gb += g[s];
    b_->grad.data[co] += gb;
    for (int off = 0; off < 27; ++off) {
      const int dz = off / 9 - 1, dy = (off / 3) % 3 - 1, dx = off % 3 - 1;
      const int zl = lo_of(dz), zh = hi_of(dz, r), yl = lo_of(dy), yh = hi_of(dy, r), xl = lo_of(dx),
                xh = hi_of(dx, r);
      for (int ci = 0; ci < cin_; ++ci) {
        const std::size_t widx = (static_cast<std::size_t>(co) * cin_ + ci) * 27 + off;
        const float w = wt[widx];
        const float* src = in.ptr() + ci * N;
        float* gsrc = grad_in ? grad_in->ptr() + ci * N : nullptr;
        float acc = 0.0f;
        for (int z = zl; z < zh; ++z)
          for (int y = yl; y < yh; ++y) {
            const float* grow = g + (static_cast<std::size_t>(z) * r + y) * r;
            const std::size_t ioff = (static_cast<std::size_t>(z + dz) * r + (y + dy)) * r + dx;
            const float* irow = src + ioff;
            for (int x = xl; x < xh; ++x) acc += grow[x] * irow[x];
            if (gsrc) {
              float* girow = gsrc + ioff;
              for (int x = xl; x < xh; ++x) girow[x] += w * grow[x];
            }
          }
        gw[widx] += acc;
      }
    }
  }
}

void Conv3d::backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active,
                             Tensor* grad_in) const {
  const int r = in.dim(1);
  const std::size_t N = static_cast<std::size_t>(r) * r * r;
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  int nb[27];
  for (const auto s : active.sites) {
    gather_neighbours(s, r, active.mask, nb);
    for (int co = 0; co < cout_; ++co) {
      const float g = grad_out.data[co * N + s];
      if (g == 0.0f) continue;
      b_->grad.data[co] += g;
      const std::size_t wbase = static_cast<std::size_t>(co) * cin_ * 27;
      for (int off = 0; off < 27; ++off) {
        if (nb[off] < 0) continue;
        for (int ci = 0; ci < cin_; ++ci) {
          const std::size_t i = ci * N + nb[off];
          gw[wbase + ci * 27 + off] += g * in.data[i];
          if (grad_in) grad_in->data[i] += wt[wbase + ci * 27 + off] * g;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Deconv3d

Deconv3d::Deconv3d(ParameterStore& ps, const std::string& name, int cin, int cout) : cin_(cin), cout_(cout) {
  w_ = &ps.create(name + ".weight", {cout, cin, 8});
  b_ = &ps.create(name + ".bias", {cout});
}

void Deconv3d::init(std::mt19937_64& rng) {
  fill_normal(w_->value, rng, std::sqrt(2.0 / cin_));
  b_->value.zero();
}

Tensor Deconv3d::forward(const Tensor& in) const {
  expect_shape(in, 4, cin_, "deconv3d");
  const int r = in.dim(1), R = 2 * r;
  const std::size_t N = static_cast<std::size_t>(r) * r * r, NO = static_cast<std::size_t>(R) * R * R;
  Tensor out({cout_, R, R, R});
  const float* wt = w_->value.ptr();
  for (int co = 0; co < cout_; ++co) {
    float* o = out.ptr() + co * NO;
    std::fill(o, o + NO, b_->value.data[co]);
    for (int ci = 0; ci < cin_; ++ci) {
      const float* src = in.ptr() + ci * N;
      for (int tap = 0; tap < 8; ++tap) {
        const int a = tap >> 2, b = (tap >> 1) & 1, c = tap & 1;
        const float w = wt[(static_cast<std::size_t>(co) * cin_ + ci) * 8 + tap];
        for (int z = 0; z < r; ++z)
          for (int y = 0; y < r; ++y) {
            float* orow = o + (static_cast<std::size_t>(2 * z + a) * R + (2 * y + b)) * R + c;
            const float* irow = src + (static_cast<std::size_t>(z) * r + y) * r;
            for (int x = 0; x < r; ++x) orow[2 * x] += w * irow[x];
          }
      }
    }
  }
  return out;
}

namespace {

// Parent site and kernel tap of an output site at resolution R = 2r.
inline void parent_tap(int site, int R, int& parent, int& tap) {
  const int x = site % R, y = (site / R) % R, z = site / (R * R);
  const int r = R / 2;
  parent = ((z >> 1) * r + (y >> 1)) * r + (x >> 1);
  tap = ((z & 1) << 2) | ((y & 1) << 1) | (x & 1);
}

}  // namespace

Tensor Deconv3d::forward_sparse(const Tensor& in, const ActiveSet& active) const {
  expect_shape(in, 4, cin_, "deconv3d");
  const int r = in.dim(1), R = 2 * r;
  if (active.resolution != R) throw std::invalid_argument("deconv3d: active set resolution mismatch");
  const std::size_t N = static_cast<std::size_t>(r) * r * r, NO = static_cast<std::size_t>(R) * R * R;
  Tensor out({cout_, R, R, R});
  const float* wt = w_->value.ptr();
  for (const auto s : active.sites) {
    int parent = 0, tap = 0;
    parent_tap(s, R, parent, tap);
    for (int co = 0; co < cout_; ++co) {
      float acc = b_->value.data[co];
      const float* wco = wt + static_cast<std::size_t>(co) * cin_ * 8 + tap;
      for (int ci = 0; ci < cin_; ++ci) acc += wco[ci * 8] * in.data[ci * N + parent];
      out.data[co * NO + s] = acc;
    }
  }
  return out;
}

void Deconv3d::backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const {
  const int r = in.dim(1), R = 2 * r;
  const std::size_t N = static_cast<std::size_t>(r) * r * r, NO = static_cast<std::size_t>(R) * R * R;
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  for (int co = 0; co < cout_; ++co) {
    const float* g = grad_out.ptr() + co * NO;
    float gb = 0.0f;
    for (std::size_t s = 0; s < NO; ++s) gb += g[s];
    b_->grad.data[co] += gb;
    for (int ci = 0; ci < cin_; ++ci) {
      const float* src = in.ptr() + ci * N;
      float* gsrc = grad_in ? grad_in->ptr() + ci * N : nullptr;
      for (int tap = 0; tap < 8; ++tap) {
        const int a = tap >> 2, b = (tap >> 1) & 1, c = tap & 1;
        const std::size_t widx = (static_cast<std::size_t>(co) * cin_ + ci) * 8 + tap;
        const float w = wt[widx];
        float acc = 0.0f;
        for (int z = 0; z < r; ++z)
          for (int y = 0; y < r; ++y) {
            const float* grow = g + (static_cast<std::size_t>(2 * z + a) * R + (2 * y + b)) * R + c;
            const std::size_t ioff = (static_cast<std::size_t>(z) * r + y) * r;
            for (int x = 0; x < r; ++x) acc += grow[2 * x] * src[ioff + x];
            if (gsrc)
              for (int x = 0; x < r; ++x) gsrc[ioff + x] += w * grow[2 * x];
          }
        gw[widx] += acc;
      }
    }
  }
}

void Deconv3d::backward_sparse(const Tensor& in, const Tensor& grad_out, const ActiveSet& active,
                               Tensor* grad_in) const {
  const int r = in.dim(1), R = 2 * r;
  const std::size_t N = static_cast<std::size_t>(r) * r * r, NO = static_cast<std::size_t>(R) * R * R;
  if (grad_in) *grad_in = Tensor(in.shape);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  for (const auto s : active.sites) {
    int parent = 0, tap = 0;
    parent_tap(s, R, parent, tap);
    for (int co = 0; co < cout_; ++co) {
      const float g = grad_out.data[co * NO + s];
      if (g == 0.0f) continue;
      b_->grad.data[co] += g;
      const std::size_t wbase = static_cast<std::size_t>(co) * cin_ * 8 + tap;
      for (int ci = 0; ci < cin_; ++ci) {
        const std::size_t i = ci * N + parent;
        gw[wbase + ci * 8] += g * in.data[i];
        if (grad_in) grad_in->data[i] += wt[wbase + ci * 8] * g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(ParameterStore& ps, const std::string& name, int in, int out) : in_(in), out_(out) {
  w_ = &ps.create(name + ".weight", {out, in});
  b_ = &ps.create(name + ".bias", {out});
}

void Linear::init(std::mt19937_64& rng, double gain) {
  fill_normal(w_->value, rng, std::sqrt(gain / in_));
  b_->value.zero();
}

std::vector<float> Linear::forward(std::span<const float> x) const {
  if (static_cast<int>(x.size()) != in_)
    throw std::invalid_argument("linear: input length " + std::to_string(x.size()) + " != " + std::to_string(in_));
  std::vector<float> y(static_cast<std::size_t>(out_));
  const float* wt = w_->value.ptr();
  for (int o = 0; o < out_; ++o) {
    const float* row = wt + static_cast<std::size_t>(o) * in_;
    float acc = 0.0f;
    for (int i = 0; i < in_; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = b_->value.data[o] + acc;
  }
  return y;
}

void Linear::backward(std::span<const float> x, std::span<const float> grad_out, std::vector<float>* grad_in) const {
  if (grad_in) grad_in->assign(static_cast<std::size_t>(in_), 0.0f);
  const float* wt = w_->value.ptr();
  float* gw = w_->grad.ptr();
  for (int o = 0; o < out_; ++o) {
    const float g = grad_out[static_cast<std::size_t>(o)];
    b_->grad.data[o] += g;
    if (g == 0.0f) continue;
    float* grow = gw + static_cast<std::size_t>(o) * in_;
    const float* row = wt + static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) grow[i] += g * x[static_cast<std::size_t>(i)];
    if (grad_in)
      for (int i = 0; i < in_; ++i) (*grad_in)[static_cast<std::size_t>(i)] += row[i] * g;
  }
}

// ---------------------------------------------------------------------------

void relu_inplace(std::span<float> x) {
  for (auto& v : x) v = v > 0.0f ? v : 0.0f;
}

void relu_backward(std::span<const float> activation, std::span<float> grad) {
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(activation[i] > 0.0f)) grad[i] = 0.0f;
}

void apply_mask(Tensor& t, const ActiveSet& active) {
  const std::size_t N = active.total();
  if (t.numel() % N) throw std::invalid_argument("apply_mask: size mismatch");
  const std::size_t C = t.numel() / N;
  for (std::size_t c = 0; c < C; ++c) {
    float* p = t.ptr() + c * N;
    for (std::size_t s = 0; s < N; ++s)
      if (!active.mask[s]) p[s] = 0.0f;
  }
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

float standardize_inplace(std::span<float> x) {
  constexpr double eps = 1e-5;
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  for (float& v : x) v = static_cast<float>((v - mean) * inv);
  return static_cast<float>(inv);
}

void standardize_backward(std::span<const float> y, float inv_std, std::span<float> grad) {
  const double n = static_cast<double>(y.size());
  double mean_g = 0.0, mean_gy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mean_g += grad[i];
    mean_gy += static_cast<double>(grad[i]) * y[i];
  }
  mean_g /= n;
  mean_gy /= n;
  for (std::size_t i = 0; i < y.size(); ++i)
    grad[i] = static_cast<float>(inv_std * (grad[i] - mean_g - y[i] * mean_gy));
}

}  // namespace svx::nn
