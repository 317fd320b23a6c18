#pragma once

#include <vector>

#include "dlgan/autodiff.hpp"

namespace dlgan {

// Adaptive moment estimation over a fixed parameter group. Values are
// rounded back to single precision after every update.
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(ParamList params, Options options);

  void zero_grad();
  void step();

  const ParamList& params() const { return params_; }
  long steps_taken() const { return t_; }

 private:
  ParamList params_;
  Options opt_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace dlgan
