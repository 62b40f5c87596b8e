#pragma once

#include <cmath>
#include <vector>

#include "panodepth/tensor.hpp"

namespace pano {

// Adam with bias correction. Moment buffers are created on the first step
// and bound to the parameter order passed to step().
template <typename Scalar>
class Adam {
 public:
  struct Moments {
    typename Tensor<Scalar>::Array m, v;
  };

  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update to every parameter from its grad() buffer.
  void step(const std::vector<Tensor<Scalar>*>& params, double lr) {
    if (!(lr >= 0.0)) throw std::invalid_argument("adam: learning rate must be >= 0");
    if (moments_.empty()) {
      for (const auto* p : params)
        moments_.push_back({Tensor<Scalar>::Array::Zero(p->size()),
                            Tensor<Scalar>::Array::Zero(p->size())});
    }
    if (moments_.size() != params.size())
      throw std::invalid_argument("adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& g = params[i]->grad();
      if (g.size() != params[i]->size() || moments_[i].m.size() != g.size())
        throw std::invalid_argument("adam: gradient/moment shape mismatch");
      if (!g.isFinite().all()) throw NumericError("adam: non-finite gradient");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& [m, v] = moments_[i];
      const auto& g = params[i]->grad();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      const auto m_hat = m / static_cast<Scalar>(bc1);
      const auto v_hat = v / static_cast<Scalar>(bc2);
      params[i]->data() -=
          static_cast<Scalar>(lr) * m_hat / (v_hat.sqrt() + static_cast<Scalar>(eps_));
    }
  }

  long step_count() const { return t_; }
  const std::vector<Moments>& moments() const { return moments_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double epsilon() const { return eps_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace pano
