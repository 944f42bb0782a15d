#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cotrm/matrix.hpp"
#include "cotrm/vocab.hpp"

namespace cotrm {

// Trainable parameters of the two-layer policy network. The same shape
// serves as a gradient container.
struct PolicyParams {
  Matrix w1;               // H x F
  std::vector<double> b1;  // H
  Matrix w2;               // V x H
  std::vector<double> b2;  // V

  bool operator==(const PolicyParams&) const = default;

  std::size_t numel() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
  bool all_finite() const;

  // this += scale * other. Throws on shape mismatch.
  void axpy(double scale, const PolicyParams& other);
  void scale(double factor);
  void fill(double value);
};

struct SequenceSample {
  std::vector<int> tokens;
  double logprob = 0.0;  // natural log of the sequence probability

  bool operator==(const SequenceSample&) const = default;
};

// Rolling state of one autoregressive decode.
struct DecodingState {
  std::vector<double> context;  // episode feature vector
  std::vector<int> prefix;      // tokens generated so far
  int position = 0;             // equals prefix length during decoding
};

// Autoregressive categorical policy over the response vocabulary:
// softmax(W2 tanh(W1 f + b1) + b2) at each step, where f concatenates the
// episode features, one-hots of the previous two tokens, a one-hot of the
// step position, and a constant bias entry.
class Policy {
 public:
  Policy(Vocabulary vocab, int episode_feature_dim, int hidden, int max_len);

  const Vocabulary& vocab() const { return vocab_; }
  int episode_feature_dim() const { return episode_feature_dim_; }
  int hidden() const { return hidden_; }
  int max_len() const { return max_len_; }

  // F = episode features + previous-token one-hot + token-two-back one-hot
  //     + position one-hot + bias.
  int feature_dim() const {
    return episode_feature_dim_ + 2 * vocab_.size() + max_len_ + 1;
  }

  PolicyParams zero_params() const;
  // Entries uniform in [-0.05, 0.05], drawn in a fixed order from the seed.
  PolicyParams init_params(std::uint64_t seed) const;

  // Feature vector for predicting the token at `position` given the tokens
  // generated so far. Throws out_of_range when position > max_len.
  std::vector<double> featurize(std::span<const double> episode_features,
                                std::span<const int> prefix,
                                int position) const;

  std::vector<double> forward_logits(const PolicyParams& params,
                                     std::span<const double> features) const;

  // Samples until EOS or until limit tokens are emitted. Deterministic in
  // (params, features, seed). limit must be in [1, max_len].
  SequenceSample sample(const PolicyParams& params,
                        std::span<const double> episode_features, int limit,
                        std::uint64_t seed) const;

  // Argmax decode until EOS or max_len tokens.
  std::vector<int> greedy(const PolicyParams& params,
                          std::span<const double> episode_features) const;

  // Sum over steps of log softmax(logits)[token]. Throws invalid_argument
  // on an empty sequence or a token index outside the vocabulary.
  double sequence_logprob(const PolicyParams& params,
                          std::span<const double> episode_features,
                          std::span<const int> tokens) const;

  // Gradient of sequence_logprob with respect to every parameter, by
  // reverse-mode accumulation. If logprob_out is non-null it receives the
  // value of sequence_logprob from the same forward passes.
  PolicyParams logprob_grad(const PolicyParams& params,
                            std::span<const double> episode_features,
                            std::span<const int> tokens,
                            double* logprob_out = nullptr) const;

 private:
  void check_params(const PolicyParams& params) const;

  Vocabulary vocab_;
  int episode_feature_dim_;
  int hidden_;
  int max_len_;
};

// Numerically stable log softmax.
std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace cotrm
