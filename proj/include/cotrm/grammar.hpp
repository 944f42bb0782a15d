#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotrm/vocab.hpp"

namespace cotrm {

enum class Mode { cot, direct };

const char* to_string(Mode mode);
Mode mode_from_string(std::string_view s);  // throws invalid_argument

// Structured content of one response transcript. In direct mode only the
// answer is meaningful; dim_scores and stated_totals stay empty/zero.
struct ParsedResponse {
  std::vector<std::array<int, 2>> dim_scores;  // D rows, entries 0..9
  std::array<int, 2> stated_totals{0, 0};      // each 0..99
  int answer = 0;                              // 1 or 2
  Mode mode = Mode::cot;

  bool operator==(const ParsedResponse&) const = default;
};

// Outcome of parsing: either a ParsedResponse or the ordered list of
// format violations. Malformed input is a normal return, never a failure.
struct ParseResult {
  std::optional<ParsedResponse> parsed;
  std::vector<std::string> violations;

  bool ok() const { return parsed.has_value(); }
};

struct RewardBreakdown {
  int r_fmt = 0;   // {0,1}
  int r_acc = 0;   // {0,1}
  int total = 0;   // r_fmt + r_acc

  bool operator==(const RewardBreakdown&) const = default;
};

struct ConsistencyReport {
  bool totals_match = false;
  bool answer_matches_argmax = false;
  bool is_tie = false;
  bool consistent = false;  // totals_match && answer_matches_argmax && !is_tie
};

// Canonical response grammar over a fixed vocabulary.
//
// cot mode:    <think> (dimK a b)xD total t1 t1 t2 t2 </think>
//              <answer> c </answer> [EOS]
// direct mode: <answer> c </answer> [EOS]
//
// where a, b are single-digit scores per candidate, the stated totals are
// rendered as exactly two digit tokens each, and c is 1 or 2.
class ResponseGrammar {
 public:
  explicit ResponseGrammar(const Vocabulary& vocab) : vocab_(&vocab) {}

  const Vocabulary& vocab() const { return *vocab_; }
  int dim_count() const { return vocab_->dim_count(); }

  // Length of a full cot response without the trailing EOS.
  int cot_length() const { return 3 * dim_count() + 10; }

  ParseResult parse(std::span<const int> tokens, Mode mode) const;

  // 1 iff the required tag pairs each appear exactly once, in canonical
  // order (think pair before answer pair in cot mode; only the answer pair,
  // with no think tags at all, in direct mode). Body content is not
  // inspected here; that is the accuracy/consistency layer's job.
  int format_reward(std::span<const int> tokens, Mode mode) const;

  // 1 iff parsing succeeded and the parsed answer equals ground_truth.
  static int accuracy_reward(const ParseResult& result, int ground_truth);

  RewardBreakdown total_reward(std::span<const int> tokens, Mode mode,
                               int ground_truth) const;

  // Reasoning-decision consistency for a parsed cot response. Throws
  // invalid_argument on direct-mode input; ties are never consistent.
  static ConsistencyReport consistency_check(const ParsedResponse& parsed);

  // Canonical token sequence for a valid ParsedResponse, ending in EOS.
  // Throws invalid_argument on out-of-range scores, totals, or answer.
  std::vector<int> render(const ParsedResponse& parsed) const;

 private:
  const Vocabulary* vocab_;
};

}  // namespace cotrm
