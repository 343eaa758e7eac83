#include "wavebank/ctc.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "wavebank/error.hpp"

namespace wavebank {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

struct CtcComputation {
  double loss;
  Tensor grad;  // dLoss/dlogits, [T, L+1]
};

// Forward-backward over the blank-extended label l' of length S = 2|l|+1,
// blanks at even positions. alpha includes the emission at frame t; beta is
// the strict suffix probability from t+1 on, so alpha_t(s)*beta_t(s) sums
// to P(label) at every t.
CtcComputation ctc_forward_backward(const Tensor& logits, const std::vector<int>& label) {
  if (logits.rank() != 2) throw ShapeError("ctc_loss: logits must be [T, L+1]");
  if (!logits.all_finite()) throw NumericError("ctc_loss: non-finite logits");
  const int64_t T = logits.dim(0);
  const int64_t n_symbols = logits.dim(1);
  for (int id : label) {
    if (id <= kBlankId || id >= n_symbols) {
      throw ConfigError("ctc_loss: label id " + std::to_string(id) + " outside [1," +
                        std::to_string(n_symbols - 1) + "]");
    }
  }
  if (T < ctc_min_frames(label)) {
    throw InfeasibleLabelError("ctc_loss: label needs at least " +
                               std::to_string(ctc_min_frames(label)) + " frames, got " +
                               std::to_string(T));
  }

  const int64_t S = 2 * static_cast<int64_t>(label.size()) + 1;
  auto ext = [&](int64_t s) -> int { return (s % 2 == 0) ? kBlankId : label[static_cast<size_t>(s / 2)]; };
  // Skip transition s-2 -> s allowed when l'_s is a label and differs from l'_{s-2}.
  auto can_skip = [&](int64_t s) -> bool {
    return s >= 2 && ext(s) != kBlankId && ext(s) != ext(s - 2);
  };

  const Tensor logp = log_softmax_rows(logits);

  std::vector<double> alpha(static_cast<size_t>(T * S), kNegInf);
  alpha[0 * S + 0] = logp.at(0, ext(0));
  if (S > 1) alpha[0 * S + 1] = logp.at(0, ext(1));
  for (int64_t t = 1; t < T; ++t) {
    for (int64_t s = 0; s < S; ++s) {
      double a = alpha[static_cast<size_t>((t - 1) * S + s)];
      if (s >= 1) a = log_add(a, alpha[static_cast<size_t>((t - 1) * S + s - 1)]);
      if (can_skip(s)) a = log_add(a, alpha[static_cast<size_t>((t - 1) * S + s - 2)]);
      if (a != kNegInf) a += logp.at(t, ext(s));
      alpha[static_cast<size_t>(t * S + s)] = a;
    }
  }
  double log_p = alpha[static_cast<size_t>((T - 1) * S + S - 1)];
  if (S > 1) log_p = log_add(log_p, alpha[static_cast<size_t>((T - 1) * S + S - 2)]);
  if (log_p == kNegInf) {
    throw NumericError("ctc_loss: zero total path probability");
  }

  std::vector<double> beta(static_cast<size_t>(T * S), kNegInf);
  beta[static_cast<size_t>((T - 1) * S + S - 1)] = 0.0;
  if (S > 1) beta[static_cast<size_t>((T - 1) * S + S - 2)] = 0.0;
  for (int64_t t = T - 2; t >= 0; --t) {
    for (int64_t s = 0; s < S; ++s) {
      double b = beta[static_cast<size_t>((t + 1) * S + s)] + logp.at(t + 1, ext(s));
      if (s + 1 < S) {
        b = log_add(b, beta[static_cast<size_t>((t + 1) * S + s + 1)] + logp.at(t + 1, ext(s + 1)));
      }
      if (s + 2 < S && can_skip(s + 2)) {
        b = log_add(b, beta[static_cast<size_t>((t + 1) * S + s + 2)] + logp.at(t + 1, ext(s + 2)));
      }
      beta[static_cast<size_t>(t * S + s)] = b;
    }
  }

  // dL/dlogit_t(k) = softmax_t(k) - sum_{s: l'_s = k} gamma_t(s)
  CtcComputation result;
  result.loss = -log_p;
  result.grad = Tensor({T, n_symbols});
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t k = 0; k < n_symbols; ++k) result.grad.at(t, k) = std::exp(logp.at(t, k));
    for (int64_t s = 0; s < S; ++s) {
      const double la = alpha[static_cast<size_t>(t * S + s)];
      const double lb = beta[static_cast<size_t>(t * S + s)];
      if (la == kNegInf || lb == kNegInf) continue;
      result.grad.at(t, ext(s)) -= std::exp(la + lb - log_p);
    }
  }
  return result;
}

}  // namespace

int64_t ctc_min_frames(const std::vector<int>& label_ids) {
  int64_t need = static_cast<int64_t>(label_ids.size());
  for (size_t i = 1; i < label_ids.size(); ++i) {
    if (label_ids[i] == label_ids[i - 1]) ++need;
  }
  return need;
}

Var ctc_loss(Tape& tape, Var logits, const std::vector<int>& label_ids) {
  CtcComputation c = ctc_forward_backward(tape.value(logits), label_ids);
  auto grad = std::make_shared<Tensor>(std::move(c.grad));
  return tape.make_node(Tensor::scalar(c.loss), {logits.id}, [grad](Tape& t, int id) {
    const int parent = t.parents(Var{id})[0];
    Tensor& g = t.grad_mut(Var{parent});
    const double upstream = t.grad_mut(Var{id})[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += upstream * (*grad)[i];
  });
}

double ctc_loss_value(const Tensor& logits, const std::vector<int>& label_ids) {
  return ctc_forward_backward(logits, label_ids).loss;
}

}  // namespace wavebank
