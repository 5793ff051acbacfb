#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "anchorface/error.hpp"
#include "anchorface/image.hpp"
#include "anchorface/random.hpp"

namespace anchorface {

enum class HeadKind {
  Anchor,  // offset regression (K*2L) + confidence (K) per grid cell
  Direct,  // one fully-connected layer to 2L absolute coordinates
};

inline std::string to_string(HeadKind h) { return h == HeadKind::Anchor ? "anchor" : "direct"; }

struct ModelConfig {
  int input_side = 64;
  int channels = 1;
  std::vector<int> widths{8, 16, 32, 64, 64, 64};
  std::vector<int> strides{2, 2, 2, 1, 1, 1};
  int grid_rows = 7;
  int grid_cols = 7;
  int K = 24;
  int L = 19;
  HeadKind head = HeadKind::Anchor;
  int context_dim = 32;  // anchor head: width of the shared global-context vector (0 disables)
  int reg_hidden = 16;   // anchor head: hidden 1x1 layer width of the regression branch (0 = none)
  int conf_hidden = 64;  // same for the confidence branch
  bool reg_grouped = true;  // regression hidden layer is per template (reg_hidden units each), read out block-diagonally
  bool context_in_reg = true;  // feed the context vector to the regression branch as well
  bool local_in_reg = false;   // feed the cell's pooled features to the regression branch
  std::uint64_t seed = 0;

  /// Spatial side of the last backbone stage.
  int backbone_side() const {
    int s = input_side;
    for (int st : strides) s = (s + st - 1) / st;
    return s;
  }
  int grid_cells() const { return grid_rows * grid_cols; }
  int feature_channels() const { return widths.back(); }
  int regression_channels() const { return K * 2 * L; }
  int confidence_channels() const { return K; }
  /// Per-cell input width of the anchor head: local features, global
  /// context and the two cell-centre coordinates.
  int head_input_channels() const { return feature_channels() + context_dim + 2; }
  int reg_input_channels() const {
    return (local_in_reg ? feature_channels() : 0) + (context_in_reg ? context_dim : 0) + 2;
  }

  void validate() const {
    if (input_side < 1 || channels < 1) detail::fail(ErrorKind::Config, "input side and channels must be positive");
    if (widths.empty() || widths.size() != strides.size()) detail::fail(ErrorKind::Config, "widths and strides must be non-empty and aligned");
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] < 1 || strides[i] < 1) detail::fail(ErrorKind::Config, "stage widths and strides must be positive");
    }
    if (K < 1 || L < 1) detail::fail(ErrorKind::Config, "K and L must be >= 1");
    if (context_dim < 0 || reg_hidden < 0 || conf_hidden < 0) {
      detail::fail(ErrorKind::Config, "context and hidden widths must be >= 0");
    }
    if (grid_rows < 1 || grid_cols < 1) detail::fail(ErrorKind::Config, "grid must be at least 1x1");
    if (grid_rows > backbone_side() || grid_cols > backbone_side()) {
      detail::fail(ErrorKind::Config, "backbone output " + std::to_string(backbone_side()) +
                                          " is smaller than the anchor grid");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["input_side"] = c.input_side;
  j["channels"] = c.channels;
  j["widths"] = c.widths;
  j["strides"] = c.strides;
  j["grid_rows"] = c.grid_rows;
  j["grid_cols"] = c.grid_cols;
  j["K"] = c.K;
  j["L"] = c.L;
  j["head"] = to_string(c.head);
  j["context_dim"] = c.context_dim;
  j["reg_hidden"] = c.reg_hidden;
  j["conf_hidden"] = c.conf_hidden;
  j["reg_grouped"] = c.reg_grouped;
  j["context_in_reg"] = c.context_in_reg;
  j["local_in_reg"] = c.local_in_reg;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_side = j.at("input_side").get<int>();
  c.channels = j.at("channels").get<int>();
  c.widths = j.at("widths").get<std::vector<int>>();
  c.strides = j.at("strides").get<std::vector<int>>();
  c.grid_rows = j.at("grid_rows").get<int>();
  c.grid_cols = j.at("grid_cols").get<int>();
  c.K = j.at("K").get<int>();
  c.L = j.at("L").get<int>();
  c.head = j.at("head").get<std::string>() == "direct" ? HeadKind::Direct : HeadKind::Anchor;
  c.context_dim = j.value("context_dim", c.context_dim);
  c.reg_hidden = j.value("reg_hidden", c.reg_hidden);
  c.conf_hidden = j.value("conf_hidden", c.conf_hidden);
  c.reg_grouped = j.value("reg_grouped", c.reg_grouped);
  c.context_in_reg = j.value("context_in_reg", c.context_in_reg);
  c.local_in_reg = j.value("local_in_reg", c.local_in_reg);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const ModelConfig& c) { return fnv1a(to_json(c).dump()); }

// ---- parameters -------------------------------------------------------------

template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> values;

  std::size_t numel() const { return values.size(); }

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Flat list of named tensors in declaration order. Gradients use the same
/// type and layout.
template <typename T>
struct ParameterSet {
  std::vector<NamedTensor<T>> tensors;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }

  const NamedTensor<T>& at(const std::string& name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    detail::fail(ErrorKind::Index, "no parameter named '" + name + "'");
  }
  NamedTensor<T>& at(const std::string& name) {
    return const_cast<NamedTensor<T>&>(std::as_const(*this).at(name));
  }

  ParameterSet zeros_like() const {
    ParameterSet z = *this;
    for (auto& t : z.tensors) std::fill(t.values.begin(), t.values.end(), T(0));
    return z;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& t : tensors) out.tensors.push_back({t.name, t.shape, std::vector<U>(t.values.begin(), t.values.end())});
    return out;
  }

  bool all_finite() const {
    for (const auto& t : tensors) {
      for (T v : t.values) {
        if (!std::isfinite(static_cast<double>(v))) return false;
      }
    }
    return true;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

/// Parameter layout implied by a config (names and shapes, no values).
inline std::vector<std::pair<std::string, std::vector<int>>> parameter_layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, std::vector<int>>> out;
  int in = cfg.channels;
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    const std::string p = "stage" + std::to_string(s);
    out.push_back({p + ".weight", {cfg.widths[s], 3, 3, in}});
    out.push_back({p + ".bias", {cfg.widths[s]}});
    in = cfg.widths[s];
  }
  if (cfg.head == HeadKind::Anchor) {
    if (cfg.context_dim > 0) {
      out.push_back({"ctx.weight", {cfg.context_dim, in * cfg.grid_cells()}});
      out.push_back({"ctx.bias", {cfg.context_dim}});
    }
    for (const auto& [branch, width] : {std::pair<std::string, int>{"reg", cfg.regression_channels()},
                                        std::pair<std::string, int>{"conf", cfg.confidence_channels()}}) {
      int hin = branch == "reg" ? cfg.reg_input_channels() : cfg.head_input_channels();
      const int hidden = branch == "reg" ? cfg.reg_hidden : cfg.conf_hidden;
      const int groups = branch == "reg" && cfg.reg_grouped ? cfg.K : 1;
      if (hidden > 0) {
        out.push_back({branch + ".hidden.weight", {hidden * groups, hin}});
        out.push_back({branch + ".hidden.bias", {hidden * groups}});
        hin = hidden;
      }
      out.push_back({branch + ".weight", {width, hin}});
      out.push_back({branch + ".bias", {width}});
    }
  } else {
    out.push_back({"fc.weight", {2 * cfg.L, in * cfg.grid_cells()}});
    out.push_back({"fc.bias", {2 * cfg.L}});
  }
  return out;
}

/// Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases; each
/// tensor draws from its own stream derived from the config seed.
template <typename T = float>
ParameterSet<T> init_params(const ModelConfig& cfg) {
  cfg.validate();
  ParameterSet<T> ps;
  const auto layout = parameter_layout(cfg);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    NamedTensor<T> t{name, shape, AlignedVector<T>(n, T(0))};
    if (shape.size() > 1) {
      const std::size_t fan_in = n / static_cast<std::size_t>(shape[0]);
      const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
      Rng rng(derive_seed(cfg.seed, i));
      for (auto& v : t.values) v = static_cast<T>(rng.uniform(-bound, bound));
    }
    ps.tensors.push_back(std::move(t));
  }
  return ps;
}

// ---- binary container ---------------------------------------------------------
// "AFPARAM1", u32 version, u64 config hash, u32 tensor count; per tensor:
// u32 name length, name, u32 rank, u32 dims..., float32 values. All LE.

inline constexpr std::uint32_t kParamFormatVersion = 1;

template <typename T>
std::string encode_params(const ParameterSet<T>& ps, std::uint64_t hash) {
  std::string out = "AFPARAM1";
  auto u32 = [&](std::uint32_t v) { detail::put_u32(out, v); };
  u32(kParamFormatVersion);
  u32(static_cast<std::uint32_t>(hash & 0xFFFFFFFFu));
  u32(static_cast<std::uint32_t>(hash >> 32));
  u32(static_cast<std::uint32_t>(ps.tensors.size()));
  for (const auto& t : ps.tensors) {
    u32(static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
    for (T v : t.values) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

struct DecodedParams {
  std::uint64_t hash = 0;
  ParameterSet<float> params;
};

inline DecodedParams decode_params(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t pos = 8;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) detail::fail(ErrorKind::Parse, "truncated parameter file");
  };
  auto u32 = [&]() {
    need(4);
    const auto v = detail::get_u32(p + pos);
    pos += 4;
    return v;
  };
  if (bytes.size() < 8 || bytes.compare(0, 8, "AFPARAM1") != 0) detail::fail(ErrorKind::Parse, "not a parameter file");
  if (u32() != kParamFormatVersion) detail::fail(ErrorKind::Parse, "unsupported parameter file version");
  DecodedParams d;
  const std::uint64_t lo = u32();
  d.hash = lo | (static_cast<std::uint64_t>(u32()) << 32);
  const std::uint32_t count = u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor<float> t;
    const std::uint32_t len = u32();
    need(len);
    t.name.assign(bytes.data() + pos, len);
    pos += len;
    const std::uint32_t rank = u32();
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(static_cast<int>(u32()));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<float>(u32());
    d.params.tensors.push_back(std::move(t));
  }
  if (pos != bytes.size()) detail::fail(ErrorKind::Parse, "trailing bytes in parameter file");
  return d;
}

/// Checks names and shapes against the config's layout.
template <typename T>
void check_layout(const ParameterSet<T>& ps, const ModelConfig& cfg) {
  const auto layout = parameter_layout(cfg);
  if (layout.size() != ps.tensors.size()) detail::fail(ErrorKind::ShapeMismatch, "parameter count does not match config");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].first != ps.tensors[i].name || layout[i].second != ps.tensors[i].shape) {
      detail::fail(ErrorKind::ShapeMismatch, "parameter '" + ps.tensors[i].name + "' does not match config");
    }
  }
}

// ---- prediction field -----------------------------------------------------------

/// Per-(anchor, template) head outputs for one image. Offsets are in
/// fractions of the input side, laid out [cell][template][landmark][xy];
/// confidences [cell][template].
struct PredictionField {
  int grid_rows = 0;
  int grid_cols = 0;
  int K = 0;
  int L = 0;
  std::vector<double> offsets;
  std::vector<double> confidences;

  std::size_t cells() const { return static_cast<std::size_t>(grid_rows) * grid_cols; }
  std::size_t pairs() const { return cells() * static_cast<std::size_t>(K); }

  double offset(std::size_t a, std::size_t t, std::size_t j, int c) const {
    return offsets[((a * K + t) * L + j) * 2 + c];
  }
  double& offset(std::size_t a, std::size_t t, std::size_t j, int c) { return offsets[((a * K + t) * L + j) * 2 + c]; }
  double confidence(std::size_t a, std::size_t t) const { return confidences[a * K + t]; }
  double& confidence(std::size_t a, std::size_t t) { return confidences[a * K + t]; }

  static PredictionField zeros(int rows, int cols, int k, int l) {
    PredictionField f{rows, cols, k, l, {}, {}};
    f.offsets.assign(f.pairs() * l * 2, 0.0);
    f.confidences.assign(f.pairs(), 0.0);
    return f;
  }
};

inline double sigmoid(double z) {
  z = std::clamp(z, -30.0, 30.0);
  return 1.0 / (1.0 + std::exp(-z));
}

// ---- network ----------------------------------------------------------------

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Intermediate values recorded by forward() and consumed by backward().
/// Activations are [channels, batch*H*W] with one column per pixel, so each
/// pixel's channel vector is contiguous.
template <typename T>
struct ForwardTrace {
  bool valid = false;
  int batch = 0;
  std::vector<int> sides;        // spatial side entering each stage, plus final
  std::vector<Mat<T>> cols;      // im2col per stage
  std::vector<Mat<T>> pre;       // pre-activation per stage
  std::vector<Mat<T>> act;       // act[0] = input, act[s+1] = stage s output
  Mat<T> pooled;                 // [C, batch*G]
  Mat<T> ctx_pre;                // [D, batch]       (anchor head context, pre-activation)
  Mat<T> head_in;                // [C+D+2, batch*G] (anchor head input)
  Mat<T> reg_in;                 // [C+2, batch*G]   (regression input when it skips the context)
  Mat<T> reg_hidden_pre;         // [H, batch*G]     (optional hidden layers)
  Mat<T> conf_hidden_pre;
  Mat<T> reg;                    // [K*2L, batch*G]  (anchor head)
  Mat<T> conf_logits;            // [K, batch*G]     (anchor head)
  Mat<T> direct;                 // [2L, batch]      (direct head)
};

template <typename T>
struct HeadGradients {
  Mat<T> reg;          // dLoss/d reg outputs
  Mat<T> conf_logits;  // dLoss/d confidence logits
  Mat<T> direct;       // dLoss/d direct outputs
};

namespace detail {

template <typename T>
void im2col3x3(const Mat<T>& in, int batch, int side, int stride, int out_side, Mat<T>& cols) {
  const int C = static_cast<int>(in.rows());
  cols.setZero(9 * C, static_cast<Eigen::Index>(batch) * out_side * out_side);
  const T* src = in.data();
  T* dst = cols.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out_side; ++oy) {
      for (int ox = 0; ox < out_side; ++ox) {
        T* col = dst + ((static_cast<std::size_t>(b) * out_side + oy) * out_side + ox) * 9 * C;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= side) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= side) continue;
            std::memcpy(col + (ky * 3 + kx) * C, src + ((static_cast<std::size_t>(b) * side + iy) * side + ix) * C,
                        sizeof(T) * C);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const Mat<T>& dcols, int batch, int side, int stride, int out_side, int C, Mat<T>& din) {
  din.setZero(C, static_cast<Eigen::Index>(batch) * side * side);
  const T* src = dcols.data();
  T* dst = din.data();
  for (int b = 0; b < batch; ++b) {
    for (int oy = 0; oy < out_side; ++oy) {
      for (int ox = 0; ox < out_side; ++ox) {
        const T* col = src + ((static_cast<std::size_t>(b) * out_side + oy) * out_side + ox) * 9 * C;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= side) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= side) continue;
            T* d = dst + ((static_cast<std::size_t>(b) * side + iy) * side + ix) * C;
            const T* s = col + (ky * 3 + kx) * C;
            for (int c = 0; c < C; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

/// Cell-centre coordinate in [-0.5, 0.5] along an axis of n cells.
inline double cell_coord(int i, int n) { return (i + 0.5) / n - 0.5; }

inline std::pair<int, int> pool_window(int o, int in, int out) {
  const int lo = (o * in) / out;
  const int hi = ((o + 1) * in + out - 1) / out;
  return {lo, hi};
}

}  // namespace detail

/// Convolutional backbone (3x3 conv + SiLU per stage), adaptive average
/// pooling to the anchor grid, then either the two-branch anchor head or
/// the direct-regression head. Stateless: parameters are passed in.
template <typename T>
class ConvNet {
 public:
  explicit ConvNet(ModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }

  /// Packs images into the [channels, batch*H*W] input layout.
  Mat<T> pack(std::span<const Image* const> images) const {
    const int S = cfg_.input_side;
    Mat<T> x(cfg_.channels, static_cast<Eigen::Index>(images.size()) * S * S);
    for (std::size_t b = 0; b < images.size(); ++b) {
      const Image& img = *images[b];
      if (img.width != S || img.height != S || img.channels != cfg_.channels) {
        detail::fail(ErrorKind::ShapeMismatch, "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                                   "x" + std::to_string(img.channels) + ", model expects " +
                                                   std::to_string(S) + "x" + std::to_string(S) + "x" +
                                                   std::to_string(cfg_.channels));
      }
      if (!img.all_finite()) detail::fail(ErrorKind::InvalidInput, "image contains non-finite values");
      T* dst = x.data() + b * static_cast<std::size_t>(S) * S * cfg_.channels;
      for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = static_cast<T>(img.data[i]);
    }
    return x;
  }

  ForwardTrace<T> forward(const Mat<T>& input, int batch, const ParameterSet<T>& params) const {
    ForwardTrace<T> tr;
    const int S = cfg_.input_side;
    if (input.rows() != cfg_.channels || input.cols() != static_cast<Eigen::Index>(batch) * S * S) {
      detail::fail(ErrorKind::ShapeMismatch, "input tensor does not match config");
    }
    const std::size_t stages = cfg_.widths.size();
    tr.batch = batch;
    tr.cols.resize(stages);
    tr.pre.resize(stages);
    tr.act.resize(stages + 1);
    tr.act[0] = input;
    int side = S;
    tr.sides.push_back(side);
    for (std::size_t s = 0; s < stages; ++s) {
      const int stride = cfg_.strides[s];
      const int out_side = (side + stride - 1) / stride;
      detail::im2col3x3(tr.act[s], batch, side, stride, out_side, tr.cols[s]);
      const auto& w = params.tensors[2 * s];
      const auto& bias = params.tensors[2 * s + 1];
      Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], static_cast<Eigen::Index>(w.numel() / w.shape[0]));
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(bias.values.data(), bias.shape[0]);
      tr.pre[s].noalias() = W * tr.cols[s];
      tr.pre[s].colwise() += B;
      tr.act[s + 1] = silu(tr.pre[s]);
      side = out_side;
      tr.sides.push_back(side);
    }

    const int gr = cfg_.grid_rows, gc = cfg_.grid_cols, G = gr * gc;
    const Mat<T>& feat = tr.act[stages];
    const int C = static_cast<int>(feat.rows());
    tr.pooled.setZero(C, static_cast<Eigen::Index>(batch) * G);
    for (int b = 0; b < batch; ++b) {
      for (int oy = 0; oy < gr; ++oy) {
        const auto [y0, y1] = detail::pool_window(oy, side, gr);
        for (int ox = 0; ox < gc; ++ox) {
          const auto [x0, x1] = detail::pool_window(ox, side, gc);
          auto dst = tr.pooled.col(static_cast<Eigen::Index>(b) * G + oy * gc + ox);
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) dst += feat.col((static_cast<Eigen::Index>(b) * side + y) * side + x);
          }
          dst /= static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
    }

    const std::size_t h = 2 * stages;
    if (cfg_.head == HeadKind::Anchor) {
      const int D = cfg_.context_dim;
      tr.head_in.resize(cfg_.head_input_channels(), static_cast<Eigen::Index>(batch) * G);
      tr.head_in.topRows(C) = tr.pooled;
      if (D > 0) {
        Eigen::Map<const Mat<T>> flat(tr.pooled.data(), static_cast<Eigen::Index>(C) * G, batch);
        tr.ctx_pre = dense(params.tensors[h], params.tensors[h + 1], flat);
        const Mat<T> ctx = silu(tr.ctx_pre);
        for (int b = 0; b < batch; ++b) {
          for (int g = 0; g < G; ++g) tr.head_in.block(C, static_cast<Eigen::Index>(b) * G + g, D, 1) = ctx.col(b);
        }
      }
      for (int b = 0; b < batch; ++b) {
        for (int g = 0; g < G; ++g) {
          const auto col = static_cast<Eigen::Index>(b) * G + g;
          tr.head_in(C + D, col) = static_cast<T>(detail::cell_coord(g % gc, gc));
          tr.head_in(C + D + 1, col) = static_cast<T>(detail::cell_coord(g / gc, gr));
        }
      }
      std::size_t r = D > 0 ? h + 2 : h;
      if (!reg_uses_head_in()) {
        tr.reg_in.resize(cfg_.reg_input_channels(), tr.head_in.cols());
        Eigen::Index row = 0;
        for (const auto& [from, n] : reg_row_blocks()) {
          tr.reg_in.middleRows(row, n) = tr.head_in.middleRows(from, n);
          row += n;
        }
      }
      tr.reg = branch_forward(params, r, reg_input(tr), cfg_.reg_hidden > 0, reg_groups(), tr.reg_hidden_pre);
      tr.conf_logits = branch_forward(params, r, tr.head_in, cfg_.conf_hidden > 0, 1, tr.conf_hidden_pre);
    } else {
      Eigen::Map<const Mat<T>> flat(tr.pooled.data(), static_cast<Eigen::Index>(C) * G, batch);
      tr.direct = dense(params.tensors[h], params.tensors[h + 1], flat);
    }
    tr.valid = true;
    return tr;
  }

  ParameterSet<T> backward(const ForwardTrace<T>& tr, const HeadGradients<T>& g, const ParameterSet<T>& params) const {
    if (!tr.valid) detail::fail(ErrorKind::State, "backward called without a completed forward trace");
    ParameterSet<T> grads = params.zeros_like();
    const std::size_t stages = cfg_.widths.size();
    const std::size_t h = 2 * stages;
    const int batch = tr.batch;
    const int gr = cfg_.grid_rows, gc = cfg_.grid_cols, G = gr * gc;
    const int C = static_cast<int>(tr.pooled.rows());

    Mat<T> dpooled;
    if (cfg_.head == HeadKind::Anchor) {
      const int D = cfg_.context_dim;
      std::size_t r = D > 0 ? h + 2 : h;
      const Mat<T> dreg_in =
          branch_backward(params, grads, r, reg_input(tr), cfg_.reg_hidden > 0, reg_groups(), tr.reg_hidden_pre, g.reg);
      Mat<T> dhead =
          branch_backward(params, grads, r, tr.head_in, cfg_.conf_hidden > 0, 1, tr.conf_hidden_pre, g.conf_logits);
      if (reg_uses_head_in()) {
        dhead += dreg_in;
      } else {
        Eigen::Index row = 0;
        for (const auto& [from, n] : reg_row_blocks()) {
          dhead.middleRows(from, n) += dreg_in.middleRows(row, n);
          row += n;
        }
      }
      dpooled = dhead.topRows(C);
      if (D > 0) {
        Mat<T> dctx = Mat<T>::Zero(D, batch);
        for (int b = 0; b < batch; ++b) {
          for (int gi = 0; gi < G; ++gi) dctx.col(b) += dhead.block(C, static_cast<Eigen::Index>(b) * G + gi, D, 1);
        }
        const Mat<T> dctx_pre = silu_backward(dctx, tr.ctx_pre);
        Eigen::Map<const Mat<T>> flat(tr.pooled.data(), static_cast<Eigen::Index>(C) * G, batch);
        const Mat<T> dflat = dense_backward(params.tensors[h], flat, dctx_pre, grads.tensors[h], grads.tensors[h + 1]);
        dpooled += Eigen::Map<const Mat<T>>(dflat.data(), C, static_cast<Eigen::Index>(batch) * G);
      }
    } else {
      Eigen::Map<const Mat<T>> flat(tr.pooled.data(), static_cast<Eigen::Index>(C) * G, batch);
      Mat<T> dflat = dense_backward(params.tensors[h], flat, g.direct, grads.tensors[h], grads.tensors[h + 1]);
      dpooled = Eigen::Map<const Mat<T>>(dflat.data(), C, static_cast<Eigen::Index>(batch) * G);
    }

    int side = tr.sides[stages];
    Mat<T> dact = Mat<T>::Zero(C, static_cast<Eigen::Index>(batch) * side * side);
    for (int b = 0; b < batch; ++b) {
      for (int oy = 0; oy < gr; ++oy) {
        const auto [y0, y1] = detail::pool_window(oy, side, gr);
        for (int ox = 0; ox < gc; ++ox) {
          const auto [x0, x1] = detail::pool_window(ox, side, gc);
          const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
          const auto src = dpooled.col(static_cast<Eigen::Index>(b) * G + oy * gc + ox);
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) dact.col((static_cast<Eigen::Index>(b) * side + y) * side + x) += inv * src;
          }
        }
      }
    }

    for (std::size_t s = stages; s-- > 0;) {
      const Mat<T>& z = tr.pre[s];
      Mat<T> dz = silu_backward(dact, z);
      const auto& w = params.tensors[2 * s];
      auto& gw = grads.tensors[2 * s];
      auto& gb = grads.tensors[2 * s + 1];
      const Eigen::Index fan = static_cast<Eigen::Index>(w.numel() / w.shape[0]);
      Eigen::Map<RowMat<T>>(gw.values.data(), w.shape[0], fan).noalias() += dz * tr.cols[s].transpose();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gb.values.data(), w.shape[0]) += dz.rowwise().sum();
      if (s == 0) break;
      Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], fan);
      Mat<T> dcols = W.transpose() * dz;
      const int in_side = tr.sides[s];
      detail::col2im3x3(dcols, batch, in_side, cfg_.strides[s], tr.sides[s + 1], static_cast<int>(tr.act[s].rows()), dact);
    }
    return grads;
  }

  /// Converts the anchor head outputs of sample `b` into a PredictionField.
  PredictionField field(const ForwardTrace<T>& tr, int b) const {
    if (!tr.valid || cfg_.head != HeadKind::Anchor) detail::fail(ErrorKind::State, "no anchor-head trace");
    const int G = cfg_.grid_cells();
    PredictionField f = PredictionField::zeros(cfg_.grid_rows, cfg_.grid_cols, cfg_.K, cfg_.L);
    const std::size_t per = static_cast<std::size_t>(cfg_.regression_channels());
    const T* reg = tr.reg.data() + static_cast<std::size_t>(b) * G * per;
    for (std::size_t i = 0; i < f.offsets.size(); ++i) f.offsets[i] = static_cast<double>(reg[i]);
    const T* logit = tr.conf_logits.data() + static_cast<std::size_t>(b) * G * cfg_.K;
    for (std::size_t i = 0; i < f.confidences.size(); ++i) f.confidences[i] = sigmoid(static_cast<double>(logit[i]));
    return f;
  }

  PredictionField forward_field(const Image& image, const ParameterSet<T>& params) const {
    const Image* ptr = &image;
    const auto tr = forward(pack(std::span<const Image* const>(&ptr, 1)), 1, params);
    return field(tr, 0);
  }

 private:
  bool reg_uses_head_in() const { return cfg_.local_in_reg && (cfg_.context_in_reg || cfg_.context_dim == 0); }

  /// (first row in head_in, row count) blocks that make up the regression input.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> reg_row_blocks() const {
    const Eigen::Index C = cfg_.feature_channels(), D = cfg_.context_dim;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
    if (cfg_.local_in_reg) blocks.push_back({0, C});
    if (cfg_.context_in_reg && D > 0) blocks.push_back({C, D});
    blocks.push_back({C + D, 2});
    return blocks;
  }

  const Mat<T>& reg_input(const ForwardTrace<T>& tr) const { return reg_uses_head_in() ? tr.head_in : tr.reg_in; }

  static Mat<T> silu(const Mat<T>& z) {
    return z.unaryExpr([](T v) { return v / (T(1) + std::exp(-v)); });
  }

  static Mat<T> silu_backward(const Mat<T>& d, const Mat<T>& z) {
    return d.binaryExpr(z, [](T dv, T zv) {
      const T sg = T(1) / (T(1) + std::exp(-zv));
      return dv * sg * (T(1) + zv * (T(1) - sg));
    });
  }

  int reg_groups() const { return cfg_.reg_hidden > 0 && cfg_.reg_grouped ? cfg_.K : 1; }

  /// One head branch starting at parameter index i (advanced past it).
  /// With `groups` > 1 the output rows split into equal blocks, each read
  /// from its own slice of the hidden layer.
  static Mat<T> branch_forward(const ParameterSet<T>& params, std::size_t& i, const Mat<T>& x, bool hidden, int groups,
                               Mat<T>& hidden_pre) {
    if (!hidden) {
      Mat<T> y = dense(params.tensors[i], params.tensors[i + 1], x);
      i += 2;
      return y;
    }
    hidden_pre = dense(params.tensors[i], params.tensors[i + 1], x);
    const Mat<T> h = silu(hidden_pre);
    const auto& w = params.tensors[i + 2];
    const auto& b = params.tensors[i + 3];
    i += 4;
    if (groups == 1) return dense(w, b, h);
    Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], w.shape[1]);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(b.values.data(), b.shape[0]);
    const Eigen::Index out = w.shape[0] / groups, hid = w.shape[1];
    Mat<T> y(w.shape[0], x.cols());
    for (int g = 0; g < groups; ++g) {
      y.middleRows(g * out, out).noalias() = W.middleRows(g * out, out) * h.middleRows(g * hid, hid);
    }
    y.colwise() += B;
    return y;
  }

  static Mat<T> branch_backward(const ParameterSet<T>& params, ParameterSet<T>& grads, std::size_t& i, const Mat<T>& x,
                                bool hidden, int groups, const Mat<T>& hidden_pre, const Mat<T>& dy) {
    if (!hidden) {
      Mat<T> dx = dense_backward(params.tensors[i], x, dy, grads.tensors[i], grads.tensors[i + 1]);
      i += 2;
      return dx;
    }
    const Mat<T> h = silu(hidden_pre);
    Mat<T> dh;
    if (groups == 1) {
      dh = dense_backward(params.tensors[i + 2], h, dy, grads.tensors[i + 2], grads.tensors[i + 3]);
    } else {
      const auto& w = params.tensors[i + 2];
      auto& gw = grads.tensors[i + 2];
      Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], w.shape[1]);
      Eigen::Map<RowMat<T>> GW(gw.values.data(), w.shape[0], w.shape[1]);
      const Eigen::Index out = w.shape[0] / groups, hid = w.shape[1];
      dh.resize(h.rows(), h.cols());
      for (int g = 0; g < groups; ++g) {
        GW.middleRows(g * out, out).noalias() += dy.middleRows(g * out, out) * h.middleRows(g * hid, hid).transpose();
        dh.middleRows(g * hid, hid).noalias() = W.middleRows(g * out, out).transpose() * dy.middleRows(g * out, out);
      }
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads.tensors[i + 3].values.data(), w.shape[0]) += dy.rowwise().sum();
    }
    Mat<T> dx = dense_backward(params.tensors[i], x, silu_backward(dh, hidden_pre), grads.tensors[i], grads.tensors[i + 1]);
    i += 4;
    return dx;
  }

  template <typename In>
  static Mat<T> dense(const NamedTensor<T>& w, const NamedTensor<T>& b, const In& x) {
    Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], w.shape[1]);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(b.values.data(), b.shape[0]);
    Mat<T> y = W * x;
    y.colwise() += B;
    return y;
  }

  template <typename In>
  static Mat<T> dense_backward(const NamedTensor<T>& w, const In& x, const Mat<T>& dy, NamedTensor<T>& gw,
                               NamedTensor<T>& gb) {
    Eigen::Map<const RowMat<T>> W(w.values.data(), w.shape[0], w.shape[1]);
    Eigen::Map<RowMat<T>>(gw.values.data(), w.shape[0], w.shape[1]).noalias() += dy * x.transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(gb.values.data(), w.shape[0]) += dy.rowwise().sum();
    return W.transpose() * dy;
  }

  ModelConfig cfg_;
};

}  // namespace anchorface
