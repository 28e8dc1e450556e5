#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pinnlab/errors.hpp"
#include "pinnlab/jet.hpp"
#include "pinnlab/param.hpp"
#include "pinnlab/rng.hpp"
#include "pinnlab/tape.hpp"

namespace pinnlab {

enum class Method { Pinn, Fls, Qres, SetPinn };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Pinn: return "pinn";
    case Method::Fls: return "fls";
    case Method::Qres: return "qres";
    case Method::SetPinn: return "setpinn";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "pinn") return Method::Pinn;
  if (s == "fls") return Method::Fls;
  if (s == "qres") return Method::Qres;
  if (s == "setpinn") return Method::SetPinn;
  throw ConfigError("unknown method: " + s);
}

struct MlpConfig {
  int in_dim = 2;
  int out_dim = 1;
  int hidden_layers = 4;
  int hidden = 512;
};

struct SetPinnConfig {
  int in_dim = 2;
  int out_dim = 1;
  int set_size = 4;
  int embedding = 32;
  int heads = 2;
  int encoder_blocks = 1;
  int ffn_hidden = 512;
  int mixer_hidden = 512;
  int probe_hidden = 512;
  int probe_hidden_layers = 1;  // hidden layers in the probe MLP
  double ln_eps = 1e-5;

  void validate() const {
    if (embedding % heads != 0)
      throw ConfigError("embedding size must be divisible by heads");
    if (set_size < 1 || embedding < 1 || heads < 1 || encoder_blocks < 1)
      throw ConfigError("set architecture sizes must be >= 1");
  }
};

/// Attention weights and intermediate embeddings kept for inspection.
struct SetTrace {
  // attn[block][head][query][key] as plain values
  std::vector<std::vector<std::vector<std::vector<double>>>> attn;
  std::vector<Jet> mixer_out;    // M_k
  std::vector<Jet> encoder_out;  // O_k
};

/// A differentiable scalar-field model u_theta. Pointwise models treat each
/// point independently; the set model conditions each prediction on its whole
/// group. group size must equal set_size() for set models.
class Model {
 public:
  virtual ~Model() = default;

  virtual Method method() const = 0;
  virtual int in_dim() const = 0;
  virtual int out_dim() const = 0;
  virtual int set_size() const { return 1; }

  const ParamLayout& layout() const { return layout_; }
  int64_t param_count() const { return layout_.size(); }

  /// Forward one group of points (group_size * in_dim coords, point-major).
  /// Returns one output jet per point (len = out_dim). with_derivs toggles
  /// the input-derivative streams.
  virtual std::vector<Jet> forward_group(Tape& t, std::span<const double> coords,
                                         bool with_derivs = true,
                                         SetTrace* trace = nullptr) const = 0;

  /// Single-point convenience.
  Jet forward_point(Tape& t, std::span<const double> x, bool with_derivs = true) const {
    if (set_size() != 1)
      throw UsageError("set model requires forward_group with the configured set size");
    return forward_group(t, x, with_derivs)[0];
  }

  ParamVector init_params(Rng rng) const {
    ParamVector theta = ParamVector::zeros(layout_);
    for (size_t i = 0; i < layout_.slices().size(); ++i) {
      const auto& s = layout_.slices()[i];
      const SliceInit& si = init_[i];
      auto dst = theta.slice(s);
      switch (si.kind) {
        case SliceInit::GlorotWeight: {
          double a = std::sqrt(6.0 / (si.fan_in + si.fan_out));
          for (auto& v : dst) v = rng.uniform(-a, a);
          break;
        }
        case SliceInit::Zero:
          break;
        case SliceInit::One:
          for (auto& v : dst) v = 1.0;
          break;
      }
    }
    return theta;
  }

 protected:
  struct SliceInit {
    enum Kind { GlorotWeight, Zero, One } kind = Zero;
    int fan_in = 0, fan_out = 0;
  };

  int64_t add_weight(const std::string& name, int rows, int cols) {
    int64_t off = layout_.add(name, rows, cols);
    init_.push_back({SliceInit::GlorotWeight, cols, rows});
    return off;
  }
  int64_t add_bias(const std::string& name, int rows) {
    int64_t off = layout_.add(name, rows, 1);
    init_.push_back({SliceInit::Zero, 0, 0});
    return off;
  }
  int64_t add_ones(const std::string& name, int rows) {
    int64_t off = layout_.add(name, rows, 1);
    init_.push_back({SliceInit::One, 0, 0});
    return off;
  }

  ParamLayout layout_;
  std::vector<SliceInit> init_;
};

namespace detail {

struct Dense {
  int64_t w = 0, b = 0;
  int rows = 0, cols = 0;
  Jet operator()(Tape& t, const Jet& x) const {
    return jet::affine(t, w, b, rows, cols, x);
  }
};

}  // namespace detail

/// Plain tanh multilayer perceptron; FLS swaps the first activation for sin.
class MlpModel : public Model {
 public:
  MlpModel(const MlpConfig& cfg, bool first_layer_sine)
      : cfg_(cfg), sine_(first_layer_sine) {
    if (cfg.hidden_layers < 1 || cfg.hidden < 1)
      throw ConfigError("mlp needs at least one hidden layer and unit");
    int prev = cfg.in_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      layers_.push_back(make_dense("l" + std::to_string(l), cfg.hidden, prev));
      prev = cfg.hidden;
    }
    out_ = make_dense("out", cfg.out_dim, prev);
  }

  Method method() const override { return sine_ ? Method::Fls : Method::Pinn; }
  int in_dim() const override { return cfg_.in_dim; }
  int out_dim() const override { return cfg_.out_dim; }

  std::vector<Jet> forward_group(Tape& t, std::span<const double> coords,
                                 bool with_derivs = true, SetTrace* = nullptr) const override {
    const size_t d = static_cast<size_t>(cfg_.in_dim);
    if (coords.size() % d != 0) throw UsageError("coords size not a multiple of in_dim");
    std::vector<Jet> out;
    out.reserve(coords.size() / d);
    for (size_t i = 0; i < coords.size(); i += d) {
      Jet h = jet::input(t, coords.subspan(i, d), with_derivs);
      for (size_t l = 0; l < layers_.size(); ++l) {
        t.enter_scope("l" + std::to_string(l));
        h = layers_[l](t, h);
        h = (l == 0 && sine_) ? jet::sin(h) : jet::tanh(h);
      }
      t.enter_scope("out");
      out.push_back(out_(t, h));
    }
    t.exit_scope();
    return out;
  }

 private:
  detail::Dense make_dense(const std::string& name, int rows, int cols) {
    detail::Dense dn;
    dn.rows = rows;
    dn.cols = cols;
    dn.w = add_weight(name + ".w", rows, cols);
    dn.b = add_bias(name + ".b", rows);
    return dn;
  }

  MlpConfig cfg_;
  bool sine_;
  std::vector<detail::Dense> layers_;
  detail::Dense out_;
};

/// Quadratic-residual network: hidden layers compute
/// sigma(W1 h (.) W2 h + W3 h + b), output layer is affine.
class QresModel : public Model {
 public:
  explicit QresModel(const MlpConfig& cfg) : cfg_(cfg) {
    int prev = cfg.in_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      QLayer q;
      std::string n = "q" + std::to_string(l);
      q.rows = cfg.hidden;
      q.cols = prev;
      q.w1 = add_weight(n + ".w1", cfg.hidden, prev);
      q.w2 = add_weight(n + ".w2", cfg.hidden, prev);
      q.w3 = add_weight(n + ".w3", cfg.hidden, prev);
      q.b = add_bias(n + ".b", cfg.hidden);
      layers_.push_back(q);
      prev = cfg.hidden;
    }
    out_.rows = cfg.out_dim;
    out_.cols = prev;
    out_.w = add_weight("out.w", cfg.out_dim, prev);
    out_.b = add_bias("out.b", cfg.out_dim);
  }

  Method method() const override { return Method::Qres; }
  int in_dim() const override { return cfg_.in_dim; }
  int out_dim() const override { return cfg_.out_dim; }

  std::vector<Jet> forward_group(Tape& t, std::span<const double> coords,
                                 bool with_derivs = true, SetTrace* = nullptr) const override {
    const size_t d = static_cast<size_t>(cfg_.in_dim);
    if (coords.size() % d != 0) throw UsageError("coords size not a multiple of in_dim");
    std::vector<Jet> out;
    for (size_t i = 0; i < coords.size(); i += d) {
      Jet h = jet::input(t, coords.subspan(i, d), with_derivs);
      for (const auto& q : layers_) {
        Jet a = jet::linear(t, q.w1, q.rows, q.cols, h);
        Jet b = jet::linear(t, q.w2, q.rows, q.cols, h);
        Jet c = jet::affine(t, q.w3, q.b, q.rows, q.cols, h);
        h = jet::tanh(jet::add(jet::mul(a, b), c));
      }
      out.push_back(out_(t, h));
    }
    return out;
  }

 private:
  struct QLayer {
    int64_t w1 = 0, w2 = 0, w3 = 0, b = 0;
    int rows = 0, cols = 0;
  };
  MlpConfig cfg_;
  std::vector<QLayer> layers_;
  detail::Dense out_;
};

/// Set architecture: pointwise mixer embedding, permutation-equivariant
/// multi-head self-attention encoder block(s) without positional encodings,
/// and a pointwise probe decoder. Each point's jet is seeded on its own
/// coordinates only, so set-mates enter attention as constants of the
/// per-point derivative streams.
class SetPinnModel : public Model {
 public:
  explicit SetPinnModel(const SetPinnConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int r = cfg.embedding;
    const int dk = r / cfg.heads;
    mix1_ = make_dense("mixer.l0", cfg.mixer_hidden, cfg.in_dim);
    mix2_ = make_dense("mixer.l1", r, cfg.mixer_hidden);
    for (int bl = 0; bl < cfg.encoder_blocks; ++bl) {
      Block b;
      std::string n = "enc" + std::to_string(bl);
      for (int h = 0; h < cfg.heads; ++h) {
        Head hd;
        std::string hn = n + ".h" + std::to_string(h);
        hd.wq = add_weight(hn + ".wq", dk, r);
        hd.wk = add_weight(hn + ".wk", dk, r);
        hd.wv = add_weight(hn + ".wv", dk, r);
        hd.wo = add_weight(hn + ".wo", r, dk);
        b.heads.push_back(hd);
      }
      b.bq = add_bias(n + ".bq", dk * cfg.heads);  // per-head slices
      b.bk = add_bias(n + ".bk", dk * cfg.heads);
      b.bv = add_bias(n + ".bv", dk * cfg.heads);
      b.bo = add_bias(n + ".bo", r);
      b.ln1_g = add_ones(n + ".ln1.g", r);
      b.ln1_b = add_bias(n + ".ln1.b", r);
      b.ffn1 = make_dense(n + ".ffn.l0", cfg.ffn_hidden, r);
      b.ffn2 = make_dense(n + ".ffn.l1", r, cfg.ffn_hidden);
      b.ln2_g = add_ones(n + ".ln2.g", r);
      b.ln2_b = add_bias(n + ".ln2.b", r);
      blocks_.push_back(b);
    }
    int prev = r;
    for (int l = 0; l < cfg.probe_hidden_layers; ++l) {
      probe_.push_back(make_dense("probe.l" + std::to_string(l), cfg.probe_hidden, prev));
      prev = cfg.probe_hidden;
    }
    probe_.push_back(make_dense("probe.out", cfg.out_dim, prev));
  }

  Method method() const override { return Method::SetPinn; }
  int in_dim() const override { return cfg_.in_dim; }
  int out_dim() const override { return cfg_.out_dim; }
  int set_size() const override { return cfg_.set_size; }
  const SetPinnConfig& config() const { return cfg_; }

  std::vector<Jet> forward_group(Tape& t, std::span<const double> coords,
                                 bool with_derivs = true, SetTrace* trace = nullptr) const override {
    const size_t d = static_cast<size_t>(cfg_.in_dim);
    const size_t m = coords.size() / d;
    if (coords.size() % d != 0 || static_cast<int>(m) != cfg_.set_size)
      throw UsageError("set model requires exactly set_size points per group");
    const int heads = cfg_.heads;
    const int dk = cfg_.embedding / heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<Jet> h(m);
    for (size_t i = 0; i < m; ++i) {
      Jet x = jet::input(t, coords.subspan(i * d, d), with_derivs);
      h[i] = mix2_(t, jet::tanh(mix1_(t, x)));
    }
    if (trace) trace->mixer_out = h;

    for (size_t bl = 0; bl < blocks_.size(); ++bl) {
      const Block& b = blocks_[bl];
      if (trace) trace->attn.emplace_back();
      // per-point q/k/v per head
      std::vector<std::vector<Jet>> q(static_cast<size_t>(heads)), k(q.size()), v(q.size());
      for (int hd = 0; hd < heads; ++hd) {
        const Head& H = b.heads[static_cast<size_t>(hd)];
        for (size_t i = 0; i < m; ++i) {
          Jet qi = jet::linear(t, H.wq, dk, cfg_.embedding, h[i]);
          qi.val = t.add(qi.val, t.param(b.bq + hd * dk, dk));
          Jet ki = jet::linear(t, H.wk, dk, cfg_.embedding, h[i]);
          ki.val = t.add(ki.val, t.param(b.bk + hd * dk, dk));
          Jet vi = jet::linear(t, H.wv, dk, cfg_.embedding, h[i]);
          vi.val = t.add(vi.val, t.param(b.bv + hd * dk, dk));
          q[static_cast<size_t>(hd)].push_back(qi);
          k[static_cast<size_t>(hd)].push_back(ki);
          v[static_cast<size_t>(hd)].push_back(vi);
        }
      }
      std::vector<Jet> attn_out(m);
      for (size_t i = 0; i < m; ++i) {
        Jet acc;  // sum over heads of W_O^h (sum_j alpha_ij v_j)
        for (int hd = 0; hd < heads; ++hd) {
          auto& qh = q[static_cast<size_t>(hd)];
          auto& kh = k[static_cast<size_t>(hd)];
          auto& vh = v[static_cast<size_t>(hd)];
          // scaled dot-product scores; set-mates contribute value-only
          std::vector<Jet> s(m);
          double smax = -1e300;
          for (size_t j = 0; j < m; ++j) {
            s[j] = jet::scale(jet::dot(qh[i], kh[j], /*drop_b=*/j != i), inv_sqrt_dk);
            smax = std::max(smax, s[j].value());
          }
          // shift-invariant softmax; the shift is a frozen constant, which
          // cancels exactly in the ratio
          std::vector<Jet> e(m);
          Jet denom;
          for (size_t j = 0; j < m; ++j) {
            e[j] = jet::exp(jet::add_imm(s[j], -smax));
            denom = j == 0 ? e[j] : jet::add(denom, e[j]);
          }
          Jet inv_denom = jet::recip(denom);
          Jet head_acc;
          if (trace) trace->attn[bl].emplace_back();
          std::vector<double>* row = nullptr;
          if (trace) {
            trace->attn[bl].back().emplace_back();
            row = &trace->attn[bl].back().back();
          }
          for (size_t j = 0; j < m; ++j) {
            Jet alpha = jet::mul(e[j], inv_denom);
            if (row) row->push_back(alpha.value());
            Jet term = (j == i) ? jet::bmul(vh[j], alpha) : jet::bmul_drop_vec(vh[j], alpha);
            head_acc = j == 0 ? term : jet::add(head_acc, term);
          }
          const Head& H = b.heads[static_cast<size_t>(hd)];
          Jet proj = jet::linear(t, H.wo, cfg_.embedding, dk, head_acc);
          acc = hd == 0 ? proj : jet::add(acc, proj);
        }
        acc.val = t.add(acc.val, t.param(b.bo, cfg_.embedding));
        attn_out[i] = acc;
      }
      for (size_t i = 0; i < m; ++i) {
        Jet z = layer_norm(t, jet::add(h[i], attn_out[i]), b.ln1_g, b.ln1_b);
        Jet f = b.ffn2(t, jet::tanh(b.ffn1(t, z)));
        h[i] = layer_norm(t, jet::add(z, f), b.ln2_g, b.ln2_b);
      }
    }
    if (trace) trace->encoder_out = h;

    std::vector<Jet> out(m);
    for (size_t i = 0; i < m; ++i) {
      Jet p = h[i];
      for (size_t l = 0; l + 1 < probe_.size(); ++l) p = jet::tanh(probe_[l](t, p));
      out[i] = probe_.back()(t, p);
    }
    return out;
  }

 private:
  struct Head {
    int64_t wq = 0, wk = 0, wv = 0, wo = 0;
  };
  struct Block {
    std::vector<Head> heads;
    int64_t bq = 0, bk = 0, bv = 0, bo = 0;
    int64_t ln1_g = 0, ln1_b = 0, ln2_g = 0, ln2_b = 0;
    detail::Dense ffn1, ffn2;
  };

  detail::Dense make_dense(const std::string& name, int rows, int cols) {
    detail::Dense dn;
    dn.rows = rows;
    dn.cols = cols;
    dn.w = add_weight(name + ".w", rows, cols);
    dn.b = add_bias(name + ".b", rows);
    return dn;
  }

  Jet layer_norm(Tape& t, const Jet& x, int64_t gain_off, int64_t bias_off) const {
    const int r = cfg_.embedding;
    Jet mu = jet::mean(x);
    Jet xc = jet::badd_scalar(x, jet::scale(mu, -1.0));
    Jet var = jet::scale(jet::dot(xc, xc), 1.0 / r);
    Jet rstd = jet::rsqrt_shifted(var, cfg_.ln_eps);
    Jet y = jet::bmul(xc, rstd);
    NodeId gamma = t.param(gain_off, r);
    Jet scaled{y.tape, y.dim, t.mul(y.val, gamma), {}, {}};
    for (int i = 0; i < y.dim; ++i) {
      scaled.d1.push_back(t.mul(y.d1[static_cast<size_t>(i)], gamma));
      scaled.d2.push_back(t.mul(y.d2[static_cast<size_t>(i)], gamma));
    }
    scaled.val = t.add(scaled.val, t.param(bias_off, r));
    return scaled;
  }

  SetPinnConfig cfg_;
  detail::Dense mix1_, mix2_;
  std::vector<Block> blocks_;
  std::vector<detail::Dense> probe_;
};

struct ModelConfig {
  Method method = Method::Pinn;
  MlpConfig mlp;      // pinn / fls / qres
  SetPinnConfig set;  // setpinn
};

inline std::unique_ptr<Model> make_model(const ModelConfig& cfg) {
  switch (cfg.method) {
    case Method::Pinn: return std::make_unique<MlpModel>(cfg.mlp, false);
    case Method::Fls: return std::make_unique<MlpModel>(cfg.mlp, true);
    case Method::Qres: return std::make_unique<QresModel>(cfg.mlp);
    case Method::SetPinn: return std::make_unique<SetPinnModel>(cfg.set);
  }
  throw ConfigError("unknown method");
}

}  // namespace pinnlab
