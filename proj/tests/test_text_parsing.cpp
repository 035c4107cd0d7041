#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace segprover;
using segprover::testing::script_cases;
using segprover::testing::state_cases;

namespace {

std::vector<std::string> texts(const std::vector<Tactic>& blocks) {
  std::vector<std::string> out;
  for (const auto& b : blocks) out.push_back(b.text());
  return out;
}

}  // namespace

TEST(ProofState, TwoGoalStateSplitsIntoSingleTargetBlocks) {
  auto blocks = parse_proof_state("case h\nn : \xE2\x84\x95\n\xE2\x8A\xA2 n + 0 = n\n\ncase h2\n\xE2\x8A\xA2 0 < 1");
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_TRUE(blocks[0].has_single_target);
  EXPECT_TRUE(blocks[1].has_single_target);
  EXPECT_EQ(blocks[1].text, "case h2\n\xE2\x8A\xA2 0 < 1");
}

TEST(ProofState, EmptyTextHasNoBlocks) { EXPECT_TRUE(parse_proof_state("").empty()); }

TEST(ProofState, TwoMarkersWithoutBlankLineIsOneDegenerateBlock) {
  auto blocks = parse_proof_state("\xE2\x8A\xA2 A\n\xE2\x8A\xA2 B");
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_FALSE(blocks[0].has_single_target);
}

TEST(ProofState, CompletionTextCountsZero) {
  EXPECT_EQ(count_open_goals("no goals"), 0u);
  EXPECT_EQ(count_open_goals("No goals"), 0u);
  EXPECT_EQ(count_open_goals("  no goals\n"), 0u);
  EXPECT_FALSE(is_completion_text("no goals left"));
}

TEST(ProofState, FixtureTable) {
  auto cases = state_cases();
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    EXPECT_EQ(parse_proof_state(c.pretty).size(), c.blocks);
    EXPECT_EQ(count_open_goals(c.pretty), c.goals);
  }
}

TEST(ProofState, CountsAgreeWithMarkerCountOnRandomStates) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> goals(0, 6);
  for (int i = 0; i < 200; ++i) {
    auto g = static_cast<std::size_t>(goals(rng));
    auto pretty = segprover::testing::pretty_with_goals(g, std::to_string(i));
    EXPECT_EQ(count_open_goals(pretty), g);
    if (g > 0) {
      EXPECT_EQ(count_target_markers(pretty), g);
    }
  }
}

TEST(ScriptParser, FixtureTable) {
  auto cases = script_cases();
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c.name);
    auto r = parse_proof_script(c.script);
    ASSERT_EQ(r.ok(), c.ok) << (r.ok() ? std::string("parsed") : r.error().message);
    if (c.ok) {
      EXPECT_EQ(texts(r.value()), c.blocks);
    }
  }
}

TEST(ScriptParser, FailureReportsLine) {
  auto r = parse_proof_script("intro h\nexact (foo]");
  ASSERT_FALSE(r.ok());
  EXPECT_EQ(r.error().line, 2u);
}

TEST(ScriptParser, JoinThenParseIsIdentityOnParsedBlocks) {
  for (const auto& c : script_cases()) {
    if (!c.ok) continue;
    SCOPED_TRACE(c.name);
    auto first = parse_proof_script(c.script);
    ASSERT_TRUE(first.ok());
    auto again = parse_proof_script(detail::join(texts(first.value()), "\n"));
    ASSERT_TRUE(again.ok());
    EXPECT_EQ(texts(again.value()), texts(first.value()));
  }
}

TEST(Core, TacticRejectsBlankText) {
  EXPECT_THROW(Tactic("   \n"), InvariantError);
  EXPECT_EQ(Tactic("simp  \n").text(), "simp");
}

TEST(Core, TrajectoryInvariants) {
  auto s = [](std::size_t g) { return ProofState::from_pretty(segprover::testing::pretty_with_goals(g, "x")); };
  EXPECT_THROW(Trajectory("t", "", {s(1)}, {}), InvariantError);
  EXPECT_THROW(Trajectory("t", "", {s(1), s(1)}, {Tactic("a")}), InvariantError);
  EXPECT_THROW(Trajectory("t", "", {s(0), s(0)}, {Tactic("a")}), InvariantError);
  EXPECT_THROW(Trajectory("t", "", {s(1), s(0), s(0)}, {Tactic("a")}), InvariantError);
  EXPECT_NO_THROW(Trajectory("t", "", {s(1), s(0)}, {Tactic("a")}));
}

TEST(Core, BoundaryStrategyThresholds) {
  EXPECT_THROW(BoundaryStrategy(BoundaryKind::token_threshold), InvariantError);
  EXPECT_THROW(BoundaryStrategy::tokens(0), InvariantError);
  EXPECT_THROW(BoundaryStrategy(BoundaryKind::token_threshold, 2.5), InvariantError);
  EXPECT_THROW(BoundaryStrategy::tactic_distance(0.0), InvariantError);
  EXPECT_THROW(BoundaryStrategy::state_distance(1.5), InvariantError);
  EXPECT_THROW(BoundaryStrategy(BoundaryKind::step, 3.0), InvariantError);
  EXPECT_NO_THROW(BoundaryStrategy::state_distance(1.0));
  EXPECT_EQ(parse_boundary_kind("goal_change"), BoundaryKind::goal_change);
  EXPECT_THROW(parse_boundary_kind("segments"), FormatError);
}

TEST(Core, MacroActionMustBeNonEmpty) { EXPECT_THROW(MacroAction({}), InvariantError); }

TEST(Core, LengthLossRecordValidation) {
  EXPECT_THROW(LengthLossRecord("e", 0, 1.0), InvariantError);
  EXPECT_THROW(LengthLossRecord("e", 1, -0.5), InvariantError);
}
