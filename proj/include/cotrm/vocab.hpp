#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cotrm {

// Token alphabet for responses: the ten digits, six structural tokens, and
// one dimension marker per scored dimension. Indices are fixed so that
// checkpoints and datasets agree byte for byte across runs.
class Vocabulary {
 public:
  static constexpr int kThinkOpen = 10;
  static constexpr int kThinkClose = 11;
  static constexpr int kAnswerOpen = 12;
  static constexpr int kAnswerClose = 13;
  static constexpr int kTotal = 14;
  static constexpr int kEos = 15;
  static constexpr int kFirstDim = 16;

  explicit Vocabulary(int dim_count);

  int size() const { return static_cast<int>(tokens_.size()); }
  int dim_count() const { return dim_count_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  const std::string& token(int index) const;  // throws out_of_range
  int index_of(std::string_view token) const;  // -1 if unknown

  // Index of "dim{d+1}", d in [0, dim_count).
  int dim_token(int d) const;

  static bool is_digit(int index) { return index >= 0 && index < 10; }
  static int digit_value(int index) { return index; }
  static int digit_token(int value) { return value; }

 private:
  int dim_count_;
  std::vector<std::string> tokens_;
};

// Space-separated rendering of a token id sequence. Throws on ids outside
// the vocabulary.
std::string join_tokens(const Vocabulary& vocab, std::span<const int> tokens);

// Inverse of join_tokens. Throws invalid_argument on unknown token text.
std::vector<int> split_tokens(const Vocabulary& vocab, std::string_view text);

}  // namespace cotrm
