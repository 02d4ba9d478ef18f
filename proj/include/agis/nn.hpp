#pragma once

#include <string>
#include <vector>

#include "agis/autodiff.hpp"
#include "agis/rng.hpp"

namespace agis {

/// Named trainable tensor. Layers register their parameters into a flat list
/// so the optimizer and checkpoint code can treat models uniformly.
struct NamedParam {
  std::string name;
  Var var;
};

using ParamList = std::vector<NamedParam>;

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.var.zero_grad();
}

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, Scalar init_std = 0.02)
      : stride_(stride), pad_(pad) {
    Tensor w({cout, cin, k, k});
    fill_normal(w, rng, init_std);
    w_ = Var(std::move(w), true);
    b_ = Var(Tensor({cout}), true);
  }

  Var operator()(const Var& x) const { return conv2d(x, w_, b_, stride_, pad_); }

  void register_params(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".w", w_});
    out.push_back({prefix + ".b", b_});
  }

  Var& weight() { return w_; }
  Var& bias() { return b_; }

 private:
  Var w_, b_;
  int stride_ = 1, pad_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int cin, int cout, int k, int stride, int pad, Rng& rng,
                  Scalar init_std = 0.02)
      : stride_(stride), pad_(pad) {
    Tensor w({cin, cout, k, k});
    fill_normal(w, rng, init_std);
    w_ = Var(std::move(w), true);
    b_ = Var(Tensor({cout}), true);
  }

  Var operator()(const Var& x) const { return conv_transpose2d(x, w_, b_, stride_, pad_); }

  void register_params(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".w", w_});
    out.push_back({prefix + ".b", b_});
  }

 private:
  Var w_, b_;
  int stride_ = 1, pad_ = 0;
};

class InstanceNorm {
 public:
  InstanceNorm() = default;
  explicit InstanceNorm(int channels) {
    gamma_ = Var(Tensor::constant({channels}, 1.0), true);
    beta_ = Var(Tensor({channels}), true);
  }

  Var operator()(const Var& x) const { return instance_norm(x, gamma_, beta_); }

  void register_params(ParamList& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma_});
    out.push_back({prefix + ".beta", beta_});
  }

 private:
  Var gamma_, beta_;
};

/// Adam with the Pix2Pix-family defaults: lr 2e-4, betas (0.5, 0.999).
class Adam {
 public:
  explicit Adam(ParamList params, Scalar lr = 2e-4, Scalar beta1 = 0.5, Scalar beta2 = 0.999,
                Scalar eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.push_back(Tensor(p.var.value().shape()));
      v_.push_back(Tensor(p.var.value().shape()));
    }
  }

  void step() {
    ++t_;
    Scalar bc1 = 1.0 - std::pow(beta1_, static_cast<Scalar>(t_));
    Scalar bc2 = 1.0 - std::pow(beta2_, static_cast<Scalar>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.var.has_grad()) continue;
      const auto& g = p.var.grad().data();
      m_[i].data() = beta1_ * m_[i].data() + (1 - beta1_) * g;
      v_[i].data() = beta2_ * v_[i].data() + (1 - beta2_) * g.square();
      p.var.mutable_value().data() -=
          lr_ * (m_[i].data() / bc1) / ((v_[i].data() / bc2).sqrt() + eps_);
    }
  }

  void zero_grad() { zero_grads(params_); }

  ParamList& params() { return params_; }
  long step_count() const { return t_; }

 private:
  ParamList params_;
  std::vector<Tensor> m_, v_;
  Scalar lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace agis
