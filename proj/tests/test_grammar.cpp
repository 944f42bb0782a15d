#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "cotrm/grammar.hpp"
#include "cotrm/util.hpp"
#include "cotrm/vocab.hpp"

using namespace cotrm;

namespace {

std::vector<int> toks(const Vocabulary& vocab, std::string_view text) {
  return split_tokens(vocab, text);
}

bool has_violation(const ParseResult& r, std::string_view needle) {
  return std::find(r.violations.begin(), r.violations.end(), needle) !=
         r.violations.end();
}

// Random valid ParsedResponse for round-trip and consistency property tests.
// When force_consistent is set, totals are the true column sums, the answer
// names the larger sum, and tied sums are redrawn.
ParsedResponse random_parsed(std::mt19937_64& rng, int dims,
                             bool force_consistent) {
  ParsedResponse p;
  p.mode = Mode::cot;
  for (;;) {
    p.dim_scores.clear();
    int sum1 = 0;
    int sum2 = 0;
    for (int d = 0; d < dims; ++d) {
      int a = static_cast<int>(uniform_below(rng, 10));
      int b = static_cast<int>(uniform_below(rng, 10));
      p.dim_scores.push_back({a, b});
      sum1 += a;
      sum2 += b;
    }
    if (force_consistent) {
      if (sum1 == sum2) continue;
      p.stated_totals = {sum1, sum2};
      p.answer = sum1 > sum2 ? 1 : 2;
    } else {
      p.stated_totals = {static_cast<int>(uniform_below(rng, 100)),
                         static_cast<int>(uniform_below(rng, 100))};
      p.answer = 1 + static_cast<int>(uniform_below(rng, 2));
    }
    return p;
  }
}

}  // namespace

TEST_CASE("vocabulary layout and token mapping") {
  const Vocabulary vocab(3);
  CHECK(vocab.size() == 19);
  CHECK(vocab.dim_count() == 3);
  for (int d = 0; d < 10; ++d) CHECK(vocab.token(d) == std::to_string(d));
  CHECK(vocab.token(Vocabulary::kThinkOpen) == "<think>");
  CHECK(vocab.token(Vocabulary::kThinkClose) == "</think>");
  CHECK(vocab.token(Vocabulary::kAnswerOpen) == "<answer>");
  CHECK(vocab.token(Vocabulary::kAnswerClose) == "</answer>");
  CHECK(vocab.token(Vocabulary::kTotal) == "total");
  CHECK(vocab.token(Vocabulary::kEos) == "EOS");
  CHECK(vocab.token(16) == "dim1");
  CHECK(vocab.token(18) == "dim3");
  CHECK(vocab.dim_token(0) == 16);
  CHECK(vocab.dim_token(2) == 18);
  for (int i = 0; i < vocab.size(); ++i)
    CHECK(vocab.index_of(vocab.token(i)) == i);
  CHECK(vocab.index_of("dim4") == -1);
  CHECK_THROWS_AS(static_cast<void>(vocab.token(19)), std::out_of_range);
  CHECK_THROWS_AS(static_cast<void>(vocab.token(-1)), std::out_of_range);
  CHECK_THROWS_AS(static_cast<void>(vocab.dim_token(3)), std::out_of_range);

  const Vocabulary wide(10);
  CHECK(wide.size() == 26);
}

TEST_CASE("join and split are inverse") {
  const Vocabulary vocab(2);
  const std::vector<int> ids{Vocabulary::kThinkOpen, 16, 7, 5,
                             Vocabulary::kEos};
  const std::string text = join_tokens(vocab, ids);
  CHECK(text == "<think> dim1 7 5 EOS");
  CHECK(split_tokens(vocab, text) == ids);
  CHECK(split_tokens(vocab, "  7   5 ") == std::vector<int>{7, 5});
  CHECK(split_tokens(vocab, "").empty());
  CHECK_THROWS_AS(split_tokens(vocab, "dim3"), std::invalid_argument);
  const std::vector<int> bad{42};
  CHECK_THROWS_AS(join_tokens(vocab, bad), std::out_of_range);
}

TEST_CASE("mode names round-trip") {
  CHECK(std::string(to_string(Mode::cot)) == "cot");
  CHECK(std::string(to_string(Mode::direct)) == "direct");
  CHECK(mode_from_string("cot") == Mode::cot);
  CHECK(mode_from_string("direct") == Mode::direct);
  CHECK_THROWS_AS(mode_from_string("freeform"), std::invalid_argument);
}

TEST_CASE("parse accepts the full cot grammar") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  CHECK(grammar.cot_length() == 19);

  const auto tokens = toks(vocab,
                           "<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                           "</think> <answer> 1 </answer>");
  const ParseResult r = grammar.parse(tokens, Mode::cot);
  REQUIRE(r.ok());
  CHECK(r.violations.empty());
  CHECK(r.parsed->dim_scores ==
        std::vector<std::array<int, 2>>{{7, 5}, {3, 4}, {0, 0}});
  CHECK(r.parsed->stated_totals == std::array<int, 2>{10, 9});
  CHECK(r.parsed->answer == 1);
  CHECK(r.parsed->mode == Mode::cot);

  auto with_eos = tokens;
  with_eos.push_back(Vocabulary::kEos);
  const ParseResult r2 = grammar.parse(with_eos, Mode::cot);
  REQUIRE(r2.ok());
  CHECK(*r2.parsed == *r.parsed);
}

TEST_CASE("parse accepts the minimal direct grammar") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  const ParseResult r =
      grammar.parse(toks(vocab, "<answer> 2 </answer>"), Mode::direct);
  REQUIRE(r.ok());
  CHECK(r.parsed->answer == 2);
  CHECK(r.parsed->dim_scores.empty());
  CHECK(r.parsed->mode == Mode::direct);
}

TEST_CASE("parse reports missing tags on an empty sequence") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  const std::vector<int> empty;

  const ParseResult cot = grammar.parse(empty, Mode::cot);
  CHECK_FALSE(cot.ok());
  CHECK(has_violation(cot, "missing <think>"));
  CHECK(has_violation(cot, "missing </think>"));
  CHECK(has_violation(cot, "missing <answer>"));
  CHECK(has_violation(cot, "missing </answer>"));

  const ParseResult direct = grammar.parse(empty, Mode::direct);
  CHECK_FALSE(direct.ok());
  CHECK(has_violation(direct, "missing <answer>"));
}

TEST_CASE("parse names specific body violations") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  auto parse = [&](std::string_view text) {
    return grammar.parse(toks(vocab, text), Mode::cot);
  };

  CHECK(has_violation(parse("<think> dim2 7 5 dim1 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> <answer> 1 </answer>"),
                      "wrong dimension order at dim1"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 total 1 0 0 9 "
                            "</think> <answer> 1 </answer>"),
                      "non-digit score for dim3"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim1 0 0 total 1 0 0 9 "
                            "</think> <answer> 1 </answer>"),
                      "wrong dimension order at dim3"));
  CHECK(has_violation(parse("<think> dim1 7 total dim2 3 4 dim3 0 0 total 1 0 "
                            "0 9 </think> <answer> 1 </answer>"),
                      "non-digit score for dim1"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 1 0 0 9 "
                            "</think> <answer> 1 </answer>"),
                      "missing total marker"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 9 "
                            "</think> <answer> 1 </answer>"),
                      "non-digit total"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "5 </think> <answer> 1 </answer>"),
                      "trailing tokens inside <think>"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> 5 <answer> 1 </answer>"),
                      "tokens between </think> and <answer>"));
  CHECK(has_violation(parse("5 <think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 "
                            "9 </think> <answer> 1 </answer>"),
                      "tokens before <think>"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> <answer> </answer>"),
                      "missing answer digit"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> <answer> 1 1 </answer>"),
                      "answer body must be a single token"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> <answer> 3 </answer>"),
                      "answer is not a candidate digit"));
  CHECK(has_violation(parse("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                            "</think> <answer> 1 </answer> EOS 5"),
                      "trailing garbage after </answer>"));
  CHECK(has_violation(parse("</think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 "
                            "9 <think> <answer> 1 </answer>"),
                      "tags out of order"));

  const ParseResult direct = grammar.parse(
      toks(vocab, "<think> </think> <answer> 1 </answer>"), Mode::direct);
  CHECK(has_violation(direct, "unexpected <think>"));
  CHECK(has_violation(direct, "unexpected </think>"));
  CHECK(has_violation(
      grammar.parse(toks(vocab, "5 <answer> 1 </answer>"), Mode::direct),
      "tokens before <answer>"));
}

TEST_CASE("format reward checks tags only") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  auto fmt = [&](std::string_view text, Mode mode) {
    return grammar.format_reward(toks(vocab, text), mode);
  };

  CHECK(fmt("<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 </think> "
            "<answer> 1 </answer>",
            Mode::cot) == 1);
  CHECK(fmt("<think> </think> <answer> 1 </answer>", Mode::cot) == 1);
  CHECK(fmt("<think> total total </think> <answer> total </answer>",
            Mode::cot) == 1);
  CHECK(fmt("<think> </think> <answer> 1", Mode::cot) == 0);
  CHECK(fmt("<answer> 1 </answer>", Mode::cot) == 0);
  CHECK(fmt("<answer> 1 </answer> <think> </think>", Mode::cot) == 0);
  CHECK(fmt("<think> <answer> 1 </answer> </think>", Mode::cot) == 0);
  CHECK(fmt("<think> </think> <think> </think> <answer> 1 </answer>",
            Mode::cot) == 0);

  CHECK(fmt("<answer> 2 </answer>", Mode::direct) == 1);
  CHECK(fmt("<answer> total </answer>", Mode::direct) == 1);
  CHECK(fmt("</answer> 2 <answer>", Mode::direct) == 0);
  CHECK(fmt("<think> </think> <answer> 2 </answer>", Mode::direct) == 0);
  CHECK(fmt("<answer> 2 </answer> <answer> 2 </answer>", Mode::direct) == 0);
  CHECK(fmt("", Mode::direct) == 0);
}

TEST_CASE("accuracy reward requires a successful parse") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  const auto good = grammar.parse(
      toks(vocab,
           "<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 </think> "
           "<answer> 1 </answer>"),
      Mode::cot);
  CHECK(ResponseGrammar::accuracy_reward(good, 1) == 1);
  CHECK(ResponseGrammar::accuracy_reward(good, 2) == 0);

  const auto bad = grammar.parse(toks(vocab, "1"), Mode::cot);
  CHECK(ResponseGrammar::accuracy_reward(bad, 1) == 0);
  CHECK(ResponseGrammar::accuracy_reward(bad, 2) == 0);
  CHECK_THROWS_AS(ResponseGrammar::accuracy_reward(good, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(ResponseGrammar::accuracy_reward(good, 3),
                  std::invalid_argument);
}

TEST_CASE("total reward composes format and accuracy") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  const auto good = toks(vocab,
                         "<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 "
                         "</think> <answer> 1 </answer>");

  CHECK(grammar.total_reward(good, Mode::cot, 1) ==
        RewardBreakdown{1, 1, 2});
  CHECK(grammar.total_reward(good, Mode::cot, 2) ==
        RewardBreakdown{1, 0, 1});
  CHECK(grammar.total_reward(std::vector<int>{}, Mode::cot, 1) ==
        RewardBreakdown{0, 0, 0});

  // Tags intact but the think body is malformed: format holds, accuracy
  // falls because the parse fails.
  const auto broken_body =
      toks(vocab, "<think> dim1 7 </think> <answer> 1 </answer>");
  CHECK(grammar.total_reward(broken_body, Mode::cot, 1) ==
        RewardBreakdown{1, 0, 1});
}

TEST_CASE("consistency check follows column sums and argmax") {
  const Vocabulary vocab(2);
  const ResponseGrammar grammar(vocab);

  ParsedResponse p;
  p.mode = Mode::cot;
  p.dim_scores = {{7, 5}, {3, 4}};
  p.stated_totals = {10, 9};
  p.answer = 1;
  ConsistencyReport rep = ResponseGrammar::consistency_check(p);
  CHECK(rep.totals_match);
  CHECK(rep.answer_matches_argmax);
  CHECK_FALSE(rep.is_tie);
  CHECK(rep.consistent);

  p.answer = 2;
  rep = ResponseGrammar::consistency_check(p);
  CHECK(rep.totals_match);
  CHECK_FALSE(rep.answer_matches_argmax);
  CHECK_FALSE(rep.consistent);

  p.answer = 1;
  p.stated_totals = {10, 8};
  rep = ResponseGrammar::consistency_check(p);
  CHECK_FALSE(rep.totals_match);
  CHECK(rep.answer_matches_argmax);
  CHECK_FALSE(rep.consistent);

  ParsedResponse tie;
  tie.mode = Mode::cot;
  tie.dim_scores = {{4, 4}, {4, 4}};
  tie.stated_totals = {8, 8};
  tie.answer = 1;
  rep = ResponseGrammar::consistency_check(tie);
  CHECK(rep.is_tie);
  CHECK(rep.totals_match);
  CHECK_FALSE(rep.answer_matches_argmax);
  CHECK_FALSE(rep.consistent);

  ParsedResponse direct;
  direct.mode = Mode::direct;
  direct.answer = 1;
  CHECK_THROWS_AS(ResponseGrammar::consistency_check(direct),
                  std::invalid_argument);
}

TEST_CASE("render emits the canonical sequence") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);

  ParsedResponse p;
  p.mode = Mode::cot;
  p.dim_scores = {{7, 5}, {3, 4}, {0, 0}};
  p.stated_totals = {10, 9};
  p.answer = 1;
  CHECK(join_tokens(vocab, grammar.render(p)) ==
        "<think> dim1 7 5 dim2 3 4 dim3 0 0 total 1 0 0 9 </think> "
        "<answer> 1 </answer> EOS");

  // Single-digit totals come out zero-padded.
  p.stated_totals = {9, 20};
  const auto tokens = grammar.render(p);
  CHECK(tokens[11] == Vocabulary::digit_token(0));
  CHECK(tokens[12] == Vocabulary::digit_token(9));
  CHECK(tokens[13] == Vocabulary::digit_token(2));
  CHECK(tokens[14] == Vocabulary::digit_token(0));

  ParsedResponse direct;
  direct.mode = Mode::direct;
  direct.answer = 2;
  CHECK(join_tokens(vocab, grammar.render(direct)) ==
        "<answer> 2 </answer> EOS");
}

TEST_CASE("render rejects out-of-range content") {
  const Vocabulary vocab(2);
  const ResponseGrammar grammar(vocab);

  ParsedResponse p;
  p.mode = Mode::cot;
  p.dim_scores = {{7, 5}, {3, 4}};
  p.stated_totals = {10, 9};
  p.answer = 3;
  CHECK_THROWS_AS(grammar.render(p), std::invalid_argument);

  p.answer = 1;
  p.dim_scores = {{7, 5}};
  CHECK_THROWS_AS(grammar.render(p), std::invalid_argument);

  p.dim_scores = {{7, 10}, {3, 4}};
  CHECK_THROWS_AS(grammar.render(p), std::invalid_argument);

  p.dim_scores = {{7, 5}, {3, 4}};
  p.stated_totals = {100, 9};
  CHECK_THROWS_AS(grammar.render(p), std::invalid_argument);

  ParsedResponse direct;
  direct.mode = Mode::direct;
  direct.answer = 1;
  direct.dim_scores = {{1, 2}};
  CHECK_THROWS_AS(grammar.render(direct), std::invalid_argument);
  direct.dim_scores.clear();
  direct.stated_totals = {3, 0};
  CHECK_THROWS_AS(grammar.render(direct), std::invalid_argument);
}

TEST_CASE("parse inverts render on random valid responses") {
  std::mt19937_64 rng(mix_seed(7, {tag64("grammar_roundtrip")}));
  for (int trial = 0; trial < 500; ++trial) {
    const int dims = 1 + static_cast<int>(uniform_below(rng, 5));
    const Vocabulary vocab(dims);
    const ResponseGrammar grammar(vocab);

    ParsedResponse p = random_parsed(rng, dims, false);
    if (uniform_below(rng, 4) == 0) {
      p = ParsedResponse{};
      p.mode = Mode::direct;
      p.answer = 1 + static_cast<int>(uniform_below(rng, 2));
    }
    const ParseResult r = grammar.parse(grammar.render(p), p.mode);
    REQUIRE(r.ok());
    CHECK(*r.parsed == p);
  }
}

TEST_CASE("consistent responses earn full reward against the argmax") {
  std::mt19937_64 rng(mix_seed(11, {tag64("grammar_consistent")}));
  for (int trial = 0; trial < 300; ++trial) {
    const int dims = 1 + static_cast<int>(uniform_below(rng, 4));
    const Vocabulary vocab(dims);
    const ResponseGrammar grammar(vocab);

    const ParsedResponse p = random_parsed(rng, dims, true);
    CHECK(ResponseGrammar::consistency_check(p).consistent);
    const auto tokens = grammar.render(p);
    CHECK(grammar.total_reward(tokens, Mode::cot, p.answer) ==
          RewardBreakdown{1, 1, 2});
  }
}

TEST_CASE("fuzzed token soup never crashes and keeps the reward algebra") {
  const Vocabulary vocab(3);
  const ResponseGrammar grammar(vocab);
  std::mt19937_64 rng(mix_seed(13, {tag64("grammar_fuzz")}));

  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t len = uniform_below(rng, 31);
    std::vector<int> tokens(len);
    for (auto& t : tokens)
      t = static_cast<int>(uniform_below(rng, vocab.size()));
    const Mode mode = uniform_below(rng, 2) == 0 ? Mode::cot : Mode::direct;
    const int gt = 1 + static_cast<int>(uniform_below(rng, 2));

    const ParseResult r = grammar.parse(tokens, mode);
    CHECK(r.ok() == r.violations.empty());

    const RewardBreakdown reward = grammar.total_reward(tokens, mode, gt);
    CHECK((reward.r_fmt == 0 || reward.r_fmt == 1));
    CHECK((reward.r_acc == 0 || reward.r_acc == 1));
    CHECK(reward.total == reward.r_fmt + reward.r_acc);

    // A scored answer implies the answer tag pair actually appeared.
    if (reward.r_acc == 1) {
      CHECK(std::count(tokens.begin(), tokens.end(),
                       Vocabulary::kAnswerOpen) == 1);
      CHECK(std::count(tokens.begin(), tokens.end(),
                       Vocabulary::kAnswerClose) == 1);
    }
  }
}
