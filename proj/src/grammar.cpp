#include "cotrm/grammar.hpp"

#include <stdexcept>

namespace cotrm {

const char* to_string(Mode mode) {
  return mode == Mode::cot ? "cot" : "direct";
}

Mode mode_from_string(std::string_view s) {
  if (s == "cot") return Mode::cot;
  if (s == "direct") return Mode::direct;
  throw std::invalid_argument("unknown mode '" + std::string(s) +
                              "' (expected cot or direct)");
}

namespace {

struct TagInfo {
  int count = 0;
  int first = -1;
  int last = -1;
};

TagInfo scan_tag(std::span<const int> tokens, int id) {
  TagInfo info;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    if (tokens[i] != id) continue;
    if (info.count == 0) info.first = i;
    info.last = i;
    ++info.count;
  }
  return info;
}

void check_once(const TagInfo& info, const char* name,
                std::vector<std::string>& violations) {
  if (info.count == 0)
    violations.push_back(std::string("missing ") + name);
  else if (info.count > 1)
    violations.push_back(std::string("repeated ") + name);
}

void check_absent(const TagInfo& info, const char* name,
                  std::vector<std::string>& violations) {
  if (info.count > 0)
    violations.push_back(std::string("unexpected ") + name);
}

// Answer body between <answer> and </answer>: exactly one candidate digit.
void parse_answer_body(std::span<const int> tokens, int open, int close,
                       ParsedResponse& out,
                       std::vector<std::string>& violations) {
  const int body_len = close - open - 1;
  if (body_len == 0) {
    violations.push_back("missing answer digit");
    return;
  }
  if (body_len > 1) {
    violations.push_back("answer body must be a single token");
    return;
  }
  int tok = tokens[open + 1];
  if (!Vocabulary::is_digit(tok) ||
      (Vocabulary::digit_value(tok) != 1 && Vocabulary::digit_value(tok) != 2)) {
    violations.push_back("answer is not a candidate digit");
    return;
  }
  out.answer = Vocabulary::digit_value(tok);
}

// Tokens after </answer>: at most one EOS.
void check_trailing(std::span<const int> tokens, int answer_close,
                    std::vector<std::string>& violations) {
  int i = answer_close + 1;
  int n = static_cast<int>(tokens.size());
  if (i < n && tokens[i] == Vocabulary::kEos) ++i;
  if (i < n) violations.push_back("trailing garbage after </answer>");
}

}  // namespace

ParseResult ResponseGrammar::parse(std::span<const int> tokens,
                                   Mode mode) const {
  ParseResult result;
  auto& violations = result.violations;

  const TagInfo think_open = scan_tag(tokens, Vocabulary::kThinkOpen);
  const TagInfo think_close = scan_tag(tokens, Vocabulary::kThinkClose);
  const TagInfo answer_open = scan_tag(tokens, Vocabulary::kAnswerOpen);
  const TagInfo answer_close = scan_tag(tokens, Vocabulary::kAnswerClose);

  if (mode == Mode::cot) {
    check_once(think_open, "<think>", violations);
    check_once(think_close, "</think>", violations);
  } else {
    check_absent(think_open, "<think>", violations);
    check_absent(think_close, "</think>", violations);
  }
  check_once(answer_open, "<answer>", violations);
  check_once(answer_close, "</answer>", violations);
  if (!violations.empty()) return result;

  if (mode == Mode::cot && !(think_open.first < think_close.first &&
                             think_close.first < answer_open.first &&
                             answer_open.first < answer_close.first)) {
    violations.push_back("tags out of order");
    return result;
  }
  if (mode == Mode::direct && !(answer_open.first < answer_close.first)) {
    violations.push_back("tags out of order");
    return result;
  }

  ParsedResponse parsed;
  parsed.mode = mode;

  if (mode == Mode::cot) {
    if (think_open.first != 0) violations.push_back("tokens before <think>");

    // Think body: (dimK a b) x D, then "total" and four total digits.
    int i = think_open.first + 1;
    const int body_end = think_close.first;
    const int d_count = dim_count();
    bool body_ok = true;
    for (int d = 0; d < d_count && body_ok; ++d) {
      if (i >= body_end || tokens[i] != vocab_->dim_token(d)) {
        violations.push_back("wrong dimension order at dim" +
                             std::to_string(d + 1));
        body_ok = false;
        break;
      }
      ++i;
      std::array<int, 2> scores{};
      for (int c = 0; c < 2; ++c) {
        if (i >= body_end) {
          violations.push_back("missing score for dim" + std::to_string(d + 1));
          body_ok = false;
          break;
        }
        if (!Vocabulary::is_digit(tokens[i])) {
          violations.push_back("non-digit score for dim" +
                               std::to_string(d + 1));
          body_ok = false;
          break;
        }
        scores[c] = Vocabulary::digit_value(tokens[i]);
        ++i;
      }
      if (body_ok) parsed.dim_scores.push_back(scores);
    }
    if (body_ok) {
      if (i >= body_end || tokens[i] != Vocabulary::kTotal) {
        violations.push_back("missing total marker");
        body_ok = false;
      } else {
        ++i;
        int digits[4];
        for (int k = 0; k < 4 && body_ok; ++k) {
          if (i >= body_end || !Vocabulary::is_digit(tokens[i])) {
            violations.push_back("non-digit total");
            body_ok = false;
            break;
          }
          digits[k] = Vocabulary::digit_value(tokens[i]);
          ++i;
        }
        if (body_ok) {
          parsed.stated_totals = {10 * digits[0] + digits[1],
                                  10 * digits[2] + digits[3]};
        }
      }
    }
    if (body_ok && i != body_end)
      violations.push_back("trailing tokens inside <think>");

    if (think_close.first + 1 != answer_open.first)
      violations.push_back("tokens between </think> and <answer>");
  } else {
    if (answer_open.first != 0) violations.push_back("tokens before <answer>");
  }

  parse_answer_body(tokens, answer_open.first, answer_close.first, parsed,
                    violations);
  check_trailing(tokens, answer_close.first, violations);

  if (violations.empty()) result.parsed = std::move(parsed);
  return result;
}

int ResponseGrammar::format_reward(std::span<const int> tokens,
                                   Mode mode) const {
  const TagInfo think_open = scan_tag(tokens, Vocabulary::kThinkOpen);
  const TagInfo think_close = scan_tag(tokens, Vocabulary::kThinkClose);
  const TagInfo answer_open = scan_tag(tokens, Vocabulary::kAnswerOpen);
  const TagInfo answer_close = scan_tag(tokens, Vocabulary::kAnswerClose);

  if (answer_open.count != 1 || answer_close.count != 1) return 0;
  if (mode == Mode::cot) {
    if (think_open.count != 1 || think_close.count != 1) return 0;
    return (think_open.first < think_close.first &&
            think_close.first < answer_open.first &&
            answer_open.first < answer_close.first)
               ? 1
               : 0;
  }
  if (think_open.count != 0 || think_close.count != 0) return 0;
  return answer_open.first < answer_close.first ? 1 : 0;
}

int ResponseGrammar::accuracy_reward(const ParseResult& result,
                                     int ground_truth) {
  if (ground_truth != 1 && ground_truth != 2)
    throw std::invalid_argument("ground_truth must be 1 or 2, got " +
                                std::to_string(ground_truth));
  return result.ok() && result.parsed->answer == ground_truth ? 1 : 0;
}

RewardBreakdown ResponseGrammar::total_reward(std::span<const int> tokens,
                                              Mode mode,
                                              int ground_truth) const {
  RewardBreakdown r;
  r.r_fmt = format_reward(tokens, mode);
  r.r_acc = accuracy_reward(parse(tokens, mode), ground_truth);
  r.total = r.r_fmt + r.r_acc;
  return r;
}

ConsistencyReport ResponseGrammar::consistency_check(
    const ParsedResponse& parsed) {
  if (parsed.mode != Mode::cot)
    throw std::invalid_argument(
        "consistency check applies only to cot-mode responses");
  int sum1 = 0;
  int sum2 = 0;
  for (const auto& row : parsed.dim_scores) {
    sum1 += row[0];
    sum2 += row[1];
  }
  ConsistencyReport report;
  report.totals_match =
      parsed.stated_totals[0] == sum1 && parsed.stated_totals[1] == sum2;
  report.is_tie = sum1 == sum2;
  report.answer_matches_argmax =
      !report.is_tie && parsed.answer == (sum1 > sum2 ? 1 : 2);
  report.consistent =
      report.totals_match && report.answer_matches_argmax && !report.is_tie;
  return report;
}

std::vector<int> ResponseGrammar::render(const ParsedResponse& parsed) const {
  if (parsed.answer != 1 && parsed.answer != 2)
    throw std::invalid_argument("answer must be 1 or 2, got " +
                                std::to_string(parsed.answer));

  std::vector<int> out;
  if (parsed.mode == Mode::cot) {
    const int d_count = dim_count();
    if (static_cast<int>(parsed.dim_scores.size()) != d_count)
      throw std::invalid_argument(
          "expected " + std::to_string(d_count) + " dimension rows, got " +
          std::to_string(parsed.dim_scores.size()));
    out.reserve(cot_length() + 1);
    out.push_back(Vocabulary::kThinkOpen);
    for (int d = 0; d < d_count; ++d) {
      out.push_back(vocab_->dim_token(d));
      for (int c = 0; c < 2; ++c) {
        int s = parsed.dim_scores[d][c];
        if (s < 0 || s > 9)
          throw std::invalid_argument("score out of range 0..9: " +
                                      std::to_string(s));
        out.push_back(Vocabulary::digit_token(s));
      }
    }
    out.push_back(Vocabulary::kTotal);
    for (int c = 0; c < 2; ++c) {
      int t = parsed.stated_totals[c];
      if (t < 0 || t > 99)
        throw std::invalid_argument("total out of range 0..99: " +
                                    std::to_string(t));
      out.push_back(Vocabulary::digit_token(t / 10));
      out.push_back(Vocabulary::digit_token(t % 10));
    }
    out.push_back(Vocabulary::kThinkClose);
  } else {
    if (!parsed.dim_scores.empty())
      throw std::invalid_argument(
          "direct-mode response cannot carry dim scores");
    if (parsed.stated_totals != std::array<int, 2>{0, 0})
      throw std::invalid_argument(
          "direct-mode response cannot carry stated totals");
  }
  out.push_back(Vocabulary::kAnswerOpen);
  out.push_back(Vocabulary::digit_token(parsed.answer));
  out.push_back(Vocabulary::kAnswerClose);
  out.push_back(Vocabulary::kEos);
  return out;
}

}  // namespace cotrm
