#include "cotrm/vocab.hpp"

#include <stdexcept>

namespace cotrm {

Vocabulary::Vocabulary(int dim_count) : dim_count_(dim_count) {
  if (dim_count < 1) throw std::invalid_argument("dim_count must be >= 1");
  tokens_.reserve(16 + dim_count);
  for (int d = 0; d < 10; ++d) tokens_.push_back(std::to_string(d));
  tokens_.push_back("<think>");
  tokens_.push_back("</think>");
  tokens_.push_back("<answer>");
  tokens_.push_back("</answer>");
  tokens_.push_back("total");
  tokens_.push_back("EOS");
  for (int d = 1; d <= dim_count; ++d)
    tokens_.push_back("dim" + std::to_string(d));
}

const std::string& Vocabulary::token(int index) const {
  if (index < 0 || index >= size())
    throw std::out_of_range("token index " + std::to_string(index) +
                            " outside vocabulary of size " +
                            std::to_string(size()));
  return tokens_[index];
}

int Vocabulary::index_of(std::string_view token) const {
  for (int i = 0; i < size(); ++i)
    if (tokens_[i] == token) return i;
  return -1;
}

int Vocabulary::dim_token(int d) const {
  if (d < 0 || d >= dim_count_)
    throw std::out_of_range("dimension index " + std::to_string(d) +
                            " outside [0, " + std::to_string(dim_count_) + ")");
  return kFirstDim + d;
}

std::string join_tokens(const Vocabulary& vocab, std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(tokens[i]);
  }
  return out;
}

std::vector<int> split_tokens(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) {
      int idx = vocab.index_of(text.substr(i, j - i));
      if (idx < 0)
        throw std::invalid_argument("unknown token '" +
                                    std::string(text.substr(i, j - i)) + "'");
      out.push_back(idx);
    }
    i = j;
  }
  return out;
}

}  // namespace cotrm
