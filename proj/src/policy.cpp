#include "cotrm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cotrm/util.hpp"

namespace cotrm {

bool PolicyParams::all_finite() const {
  auto ok = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
  };
  return ok(w1.a) && ok(b1) && ok(w2.a) && ok(b2);
}

void PolicyParams::axpy(double scale, const PolicyParams& other) {
  if (w1.rows != other.w1.rows || w1.cols != other.w1.cols ||
      b1.size() != other.b1.size() || w2.rows != other.w2.rows ||
      w2.cols != other.w2.cols || b2.size() != other.b2.size())
    throw std::invalid_argument("parameter shape mismatch in axpy");
  for (std::size_t i = 0; i < w1.a.size(); ++i) w1.a[i] += scale * other.w1.a[i];
  for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += scale * other.b1[i];
  for (std::size_t i = 0; i < w2.a.size(); ++i) w2.a[i] += scale * other.w2.a[i];
  for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += scale * other.b2[i];
}

void PolicyParams::scale(double factor) {
  for (double& x : w1.a) x *= factor;
  for (double& x : b1) x *= factor;
  for (double& x : w2.a) x *= factor;
  for (double& x : b2) x *= factor;
}

void PolicyParams::fill(double value) {
  std::fill(w1.a.begin(), w1.a.end(), value);
  std::fill(b1.begin(), b1.end(), value);
  std::fill(w2.a.begin(), w2.a.end(), value);
  std::fill(b2.begin(), b2.end(), value);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double m = logits[0];
  for (double l : logits) m = std::max(m, l);
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Policy::Policy(Vocabulary vocab, int episode_feature_dim, int hidden,
               int max_len)
    : vocab_(std::move(vocab)),
      episode_feature_dim_(episode_feature_dim),
      hidden_(hidden),
      max_len_(max_len) {
  if (episode_feature_dim < 1)
    throw std::invalid_argument("episode_feature_dim must be >= 1");
  if (hidden < 1) throw std::invalid_argument("hidden must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
}

PolicyParams Policy::zero_params() const {
  PolicyParams p;
  p.w1 = Matrix(hidden_, feature_dim());
  p.b1.assign(hidden_, 0.0);
  p.w2 = Matrix(vocab_.size(), hidden_);
  p.b2.assign(vocab_.size(), 0.0);
  return p;
}

PolicyParams Policy::init_params(std::uint64_t seed) const {
  PolicyParams p = zero_params();
  std::mt19937_64 rng(seed);
  auto draw = [&rng] { return uniform01(rng) * 0.1 - 0.05; };
  for (double& x : p.w1.a) x = draw();
  for (double& x : p.b1) x = draw();
  for (double& x : p.w2.a) x = draw();
  for (double& x : p.b2) x = draw();
  return p;
}

void Policy::check_params(const PolicyParams& params) const {
  if (params.w1.rows != hidden_ || params.w1.cols != feature_dim() ||
      static_cast<int>(params.b1.size()) != hidden_ ||
      params.w2.rows != vocab_.size() || params.w2.cols != hidden_ ||
      static_cast<int>(params.b2.size()) != vocab_.size())
    throw std::invalid_argument("parameter shapes do not match this policy");
}

std::vector<double> Policy::featurize(std::span<const double> episode_features,
                                      std::span<const int> prefix,
                                      int position) const {
  if (static_cast<int>(episode_features.size()) != episode_feature_dim_)
    throw std::invalid_argument(
        "episode feature length " + std::to_string(episode_features.size()) +
        " does not match configured " + std::to_string(episode_feature_dim_));
  if (position < 0 || position > max_len_)
    throw std::out_of_range("position " + std::to_string(position) +
                            " outside [0, " + std::to_string(max_len_) + "]");
  if (position > static_cast<int>(prefix.size()))
    throw std::invalid_argument("position exceeds prefix length");

  const int v = vocab_.size();
  std::vector<double> f(feature_dim(), 0.0);
  int base = 0;
  std::copy(episode_features.begin(), episode_features.end(), f.begin());
  base += episode_feature_dim_;
  if (position >= 1) f[base + prefix[position - 1]] = 1.0;
  base += v;
  if (position >= 2) f[base + prefix[position - 2]] = 1.0;
  base += v;
  if (position < max_len_) f[base + position] = 1.0;
  base += max_len_;
  f[base] = 1.0;
  return f;
}

std::vector<double> Policy::forward_logits(
    const PolicyParams& params, std::span<const double> features) const {
  check_params(params);
  if (static_cast<int>(features.size()) != feature_dim())
    throw std::invalid_argument("feature length " +
                                std::to_string(features.size()) +
                                " does not match F = " +
                                std::to_string(feature_dim()));
  const int fdim = feature_dim();
  const int v = vocab_.size();
  std::vector<double> hidden(hidden_);
  for (int j = 0; j < hidden_; ++j) {
    double acc = params.b1[j];
    const double* row = &params.w1.a[static_cast<std::size_t>(j) * fdim];
    for (int k = 0; k < fdim; ++k) acc += row[k] * features[k];
    hidden[j] = std::tanh(acc);
  }
  std::vector<double> logits(v);
  for (int i = 0; i < v; ++i) {
    double acc = params.b2[i];
    const double* row = &params.w2.a[static_cast<std::size_t>(i) * hidden_];
    for (int j = 0; j < hidden_; ++j) acc += row[j] * hidden[j];
    logits[i] = acc;
  }
  return logits;
}

SequenceSample Policy::sample(const PolicyParams& params,
                              std::span<const double> episode_features,
                              int limit, std::uint64_t seed) const {
  if (limit < 1 || limit > max_len_)
    throw std::invalid_argument("sample limit " + std::to_string(limit) +
                                " outside [1, " + std::to_string(max_len_) +
                                "]");
  std::mt19937_64 rng(seed);
  SequenceSample out;
  out.tokens.reserve(limit);
  for (int pos = 0; pos < limit; ++pos) {
    const auto features = featurize(episode_features, out.tokens, pos);
    const auto logp = log_softmax(forward_logits(params, features));
    const double u = uniform01(rng);
    int picked = vocab_.size() - 1;
    double cum = 0.0;
    for (int v = 0; v < vocab_.size(); ++v) {
      cum += std::exp(logp[v]);
      if (u < cum) {
        picked = v;
        break;
      }
    }
    out.tokens.push_back(picked);
    out.logprob += logp[picked];
    if (picked == Vocabulary::kEos) break;
  }
  return out;
}

std::vector<int> Policy::greedy(const PolicyParams& params,
                                std::span<const double> episode_features) const {
  std::vector<int> tokens;
  tokens.reserve(max_len_);
  for (int pos = 0; pos < max_len_; ++pos) {
    const auto features = featurize(episode_features, tokens, pos);
    const auto logits = forward_logits(params, features);
    int best = 0;
    for (int v = 1; v < vocab_.size(); ++v)
      if (logits[v] > logits[best]) best = v;
    tokens.push_back(best);
    if (best == Vocabulary::kEos) break;
  }
  return tokens;
}

double Policy::sequence_logprob(const PolicyParams& params,
                                std::span<const double> episode_features,
                                std::span<const int> tokens) const {
  if (tokens.empty())
    throw std::invalid_argument("cannot score an empty sequence");
  for (int t : tokens)
    if (t < 0 || t >= vocab_.size())
      throw std::invalid_argument("invalid token index " + std::to_string(t) +
                                  " for vocabulary of size " +
                                  std::to_string(vocab_.size()));
  double total = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto features =
        featurize(episode_features, tokens.first(t), static_cast<int>(t));
    const auto logp = log_softmax(forward_logits(params, features));
    total += logp[tokens[t]];
  }
  return total;
}

PolicyParams Policy::logprob_grad(const PolicyParams& params,
                                  std::span<const double> episode_features,
                                  std::span<const int> tokens,
                                  double* logprob_out) const {
  if (tokens.empty())
    throw std::invalid_argument("cannot score an empty sequence");
  for (int t : tokens)
    if (t < 0 || t >= vocab_.size())
      throw std::invalid_argument("invalid token index " + std::to_string(t) +
                                  " for vocabulary of size " +
                                  std::to_string(vocab_.size()));
  check_params(params);

  const int fdim = feature_dim();
  const int v = vocab_.size();
  PolicyParams grad = zero_params();
  double logprob = 0.0;

  std::vector<double> hidden(hidden_);
  std::vector<double> dlogit(v);
  std::vector<double> dhidden(hidden_);

  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto features =
        featurize(episode_features, tokens.first(t), static_cast<int>(t));

    for (int j = 0; j < hidden_; ++j) {
      double acc = params.b1[j];
      const double* row = &params.w1.a[static_cast<std::size_t>(j) * fdim];
      for (int k = 0; k < fdim; ++k) acc += row[k] * features[k];
      hidden[j] = std::tanh(acc);
    }
    std::vector<double> logits(v);
    for (int i = 0; i < v; ++i) {
      double acc = params.b2[i];
      const double* row = &params.w2.a[static_cast<std::size_t>(i) * hidden_];
      for (int j = 0; j < hidden_; ++j) acc += row[j] * hidden[j];
      logits[i] = acc;
    }
    const auto logp = log_softmax(logits);
    const int y = tokens[t];
    logprob += logp[y];

    // d logp[y] / d logits = onehot(y) - softmax(logits)
    for (int i = 0; i < v; ++i) dlogit[i] = (i == y ? 1.0 : 0.0) - std::exp(logp[i]);

    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (int i = 0; i < v; ++i) {
      grad.b2[i] += dlogit[i];
      double* grow = &grad.w2.a[static_cast<std::size_t>(i) * hidden_];
      const double* row = &params.w2.a[static_cast<std::size_t>(i) * hidden_];
      for (int j = 0; j < hidden_; ++j) {
        grow[j] += dlogit[i] * hidden[j];
        dhidden[j] += dlogit[i] * row[j];
      }
    }
    for (int j = 0; j < hidden_; ++j) {
      const double dpre = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
      grad.b1[j] += dpre;
      double* grow = &grad.w1.a[static_cast<std::size_t>(j) * fdim];
      for (int k = 0; k < fdim; ++k) grow[k] += dpre * features[k];
    }
  }

  if (logprob_out) *logprob_out = logprob;
  return grad;
}

}  // namespace cotrm
