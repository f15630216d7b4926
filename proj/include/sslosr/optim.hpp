#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sslosr/error.hpp"
#include "sslosr/nets.hpp"

namespace sslosr {

// Adaptive-moment gradient descent. Defaults follow common GAN practice;
// all values are config-exposed by the trainers.
struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  long t() const { return t_; }

  void step(ParamSet& params,
            const std::vector<std::pair<std::string, Mat>>& grads) {
    if (m_.empty()) {
      for (const auto& [name, p] : params.arrays) {
        m_.emplace_back(name, Mat::Zero(p.rows(), p.cols()));
        v_.emplace_back(name, Mat::Zero(p.rows(), p.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
      auto& p = params.arrays[i].second;
      const Mat& g = find(grads, params.arrays[i].first);
      if (!g.allFinite()) {
        throw numeric_error("Adam: non-finite gradient for " +
                            params.arrays[i].first);
      }
      Mat& m = m_[i].second;
      Mat& v = v_[i].second;
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v.array().matrix() +
          (1.0 - cfg_.beta2) * g.array().square().matrix();
      p.array() -= cfg_.lr * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + cfg_.eps);
    }
  }

  // Moment arrays for checkpointing, prefixed "m/" and "v/".
  std::vector<std::pair<std::string, Mat>> state_arrays() const {
    std::vector<std::pair<std::string, Mat>> out;
    for (const auto& [n, m] : m_) out.emplace_back("m/" + n, m);
    for (const auto& [n, v] : v_) out.emplace_back("v/" + n, v);
    return out;
  }

  void restore_state(long t,
                     const std::vector<std::pair<std::string, Mat>>& arrays) {
    t_ = t;
    m_.clear();
    v_.clear();
    for (const auto& [n, m] : arrays) {
      if (n.rfind("m/", 0) == 0) m_.emplace_back(n.substr(2), m);
      if (n.rfind("v/", 0) == 0) v_.emplace_back(n.substr(2), m);
    }
  }

 private:
  static const Mat& find(const std::vector<std::pair<std::string, Mat>>& v,
                         const std::string& name) {
    for (const auto& [n, m] : v) {
      if (n == name) return m;
    }
    throw argument_error("Adam: missing gradient for " + name);
  }

  AdamConfig cfg_;
  std::vector<std::pair<std::string, Mat>> m_, v_;
  long t_ = 0;
};

// Reads accumulated leaf gradients back off the tape.
inline std::vector<std::pair<std::string, Mat>> collect_grads(
    const ParamRefs& refs) {
  std::vector<std::pair<std::string, Mat>> out;
  for (const auto& [name, v] : refs.vals) out.emplace_back(name, v.grad());
  return out;
}

}  // namespace sslosr
