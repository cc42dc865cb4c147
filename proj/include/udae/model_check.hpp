#pragma once

#include <span>

#include "udae/gradcheck.hpp"
#include "udae/metrics.hpp"
#include "udae/unet.hpp"

namespace udae {

namespace check_detail {

// Piecewise signature of one forward pass: ReLU activation masks, pooling
// argmax choices, and the L1 sign pattern vs the target. A parameter whose
// +-h perturbations land on different signatures crossed a kink, so its
// central difference straddles two linear pieces and is excluded (the
// subgradient is still well defined; finite differences just cannot see it).
template <typename T>
std::uint64_t kink_signature(const TapeT<T> &tape, int out_id, const TensorT<T> &target) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001B3ull;
  };
  for (const auto &node : tape.nodes()) {
    if (node.op == TapeT<T>::Op::Relu) {
      const TensorT<T> &in = tape.value(node.in0);
      std::uint64_t word = 0;
      int bit = 0;
      for (std::int64_t i = 0; i < in.size(); ++i) {
        word = (word << 1) | (in.data()[i] > T(0) ? 1u : 0u);
        if (++bit == 64) {
          mix(word);
          word = 0;
          bit = 0;
        }
      }
      mix(word);
    } else if (node.op == TapeT<T>::Op::MaxPool) {
      for (std::int64_t idx : node.pool.argmax)
        mix(static_cast<std::uint64_t>(idx));
    }
  }
  const TensorT<T> &out = tape.value(out_id);
  std::uint64_t word = 0;
  int bit = 0;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const T d = out.data()[i] - target.data()[i];
    word = (word << 2) | (d > T(0) ? 1u : (d < T(0) ? 2u : 0u));
    bit += 2;
    if (bit >= 64) {
      mix(word);
      word = 0;
      bit = 0;
    }
  }
  mix(word);
  return h;
}

} // namespace check_detail

// Finite-difference check of the composite loss through the whole network,
// over every learnable parameter. The perturbed evaluations run in double
// through the same templated code path, so the numeric side is clean; the
// analytic side is the float backward pass under test. Parameters whose
// perturbation crosses a ReLU/pool/L1 kink are excluded and counted.
inline GradCheckReport full_model_gradient_check(const ModelWeights &model,
                                                 const Tensor &input, const Tensor &target,
                                                 double alpha = 0.80, double h = 1e-4,
                                                 double abs_floor = 1e-6) {
  const LossConfig loss_cfg{alpha};

  Tape tape;
  const int out_id = forward(model, input, tape);
  TensorT<float> grad_out;
  composite_loss(tape.value(out_id), target, loss_cfg, {}, &grad_out);
  const auto analytic = flatten_grads(backward(model, tape, out_id, grad_out));

  ModelWeightsT<double> scratch = cast_model<double>(model);
  const TensorT<double> input64 = input.cast<double>();
  const TensorT<double> target64 = target.cast<double>();
  std::vector<double> flat = flatten_params(scratch);

  auto eval = [&](double &loss_out, std::uint64_t &sig_out) {
    scatter_params(scratch, flat);
    TapeT<double> t;
    const int id = forward(scratch, input64, t);
    loss_out = composite_loss(t.value(id), target64, loss_cfg).value;
    sig_out = check_detail::kink_signature(t, id, target64);
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    double f_plus, f_minus;
    std::uint64_t sig_plus, sig_minus;
    flat[i] = saved + h;
    eval(f_plus, sig_plus);
    flat[i] = saved - h;
    eval(f_minus, sig_minus);
    flat[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw std::runtime_error("full_model_gradient_check: non-finite loss at parameter " +
                               std::to_string(i));
    if (sig_plus != sig_minus) {
      ++report.excluded;
      continue;
    }
    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double a = static_cast<double>(analytic[i]);
    const double err = relative_gradient_error(a, numeric, abs_floor);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

} // namespace udae
