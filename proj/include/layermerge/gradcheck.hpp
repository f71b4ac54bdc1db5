#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "layermerge/rng.hpp"
#include "layermerge/tensor.hpp"

namespace layermerge {

struct FdReport {
  double max_rel = 0.0;
  std::string worst;  // "name[i]" of the worst element
  int checked = 0;

  bool pass(double tol) const { return max_rel <= tol; }
};

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
};

// Central finite differences against tape gradients. `loss_fn` must rerun
// the forward pass from the current tensor values (tape may be null for
// the FD probes). Intended for S = double: probe step 1e-5 leaves ~1e-10
// truncation error, far under the 1e-4 acceptance tolerance.
//
// When sample_cap > 0, at most that many elements per tensor are probed
// (seed-deterministic choice) — needed to keep end-to-end model checks
// inside the time budget; primitives are checked exhaustively.
template <typename S, typename LossFn>
FdReport fd_check(std::vector<NamedTensor<S>> inputs, LossFn loss_fn, double eps = 1e-5,
                  int sample_cap = 0, uint64_t sample_seed = 0) {
  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.zero_grad();
  }
  Tape<S> tape;
  Tensor<S> loss = loss_fn(&tape);
  tape.backward(loss);

  std::vector<std::vector<S>> analytic;
  for (auto& in : inputs)
    analytic.emplace_back(in.tensor.grad(), in.tensor.grad() + in.tensor.numel());

  FdReport rep;
  Rng pick(sample_seed ^ 0x5eedf00dULL);
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& ten = inputs[t].tensor;
    std::vector<size_t> idx;
    if (sample_cap > 0 && ten.numel() > size_t(sample_cap)) {
      for (int k = 0; k < sample_cap; ++k)
        idx.push_back(size_t(pick.uniform_int(0, int64_t(ten.numel()) - 1)));
    } else {
      idx.resize(ten.numel());
      for (size_t i = 0; i < ten.numel(); ++i) idx[i] = i;
    }
    for (size_t i : idx) {
      S saved = ten.data()[i];
      auto probe = [&](double step) {
        ten.data()[i] = saved + S(step);
        double fp = double(loss_fn(nullptr).data()[0]);
        ten.data()[i] = saved - S(step);
        double fm = double(loss_fn(nullptr).data()[0]);
        ten.data()[i] = saved;
        return (fp - fm) / (2 * step);
      };
      double a = double(analytic[t][i]);
      auto rel_of = [&](double numeric) {
        double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
        return std::abs(a - numeric) / denom;
      };
      double rel = rel_of(probe(eps));
      // A probe interval can straddle a relu/maxpool kink, where the central
      // difference reads a slope average instead of the local derivative.
      // Shrinking the step moves the kink outside the interval; a genuinely
      // wrong gradient stays wrong at every step size.
      if (rel > 1e-4) rel = std::min(rel, rel_of(probe(eps / 16)));
      if (rel > 1e-4) rel = std::min(rel, rel_of(probe(eps / 256)));
      ++rep.checked;
      if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst = inputs[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace layermerge
