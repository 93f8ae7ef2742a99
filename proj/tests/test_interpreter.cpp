#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace nsm;
using nsm::fixture::ent;

namespace {

MachineState with(const KnowledgeBase& kb, std::vector<EntitySet> init) { return MachineState(kb, init); }

}  // namespace

TEST(ParseProgram, OneExpression) {
  const auto p = parse_program("( Hop R0 PlaceOfBirthOf ) RETURN", {1, 3});
  ASSERT_EQ(p.expressions.size(), 1u);
  EXPECT_TRUE(p.terminated);
  EXPECT_EQ(p.expressions[0].func, Func::Hop);
  EXPECT_EQ(p.expressions[0].vars, std::vector<std::size_t>{0});
  EXPECT_EQ(p.expressions[0].property, "PlaceOfBirthOf");
}

TEST(ParseProgram, EmptyProgram) {
  const auto p = parse_program("RETURN");
  EXPECT_TRUE(p.expressions.empty());
  EXPECT_TRUE(p.terminated);
}

TEST(ParseProgram, Errors) {
  EXPECT_THROW(parse_program("( Hop R5 p ) RETURN"), ParseError);
  EXPECT_THROW(parse_program("( Hop R0 p ) RETURN", {0, 3}), ParseError);
  EXPECT_THROW(parse_program("( Hop R0 p )", {1, 3}), ParseError);
  EXPECT_THROW(parse_program("( Fly R0 p ) RETURN", {1, 3}), ParseError);
  EXPECT_THROW(parse_program("( Equal R0 p ) RETURN", {1, 3}), ParseError);
  EXPECT_THROW(parse_program("( Hop R0 R0 ) RETURN", {1, 3}), ParseError);
  EXPECT_THROW(parse_program("RETURN RETURN"), ParseError);
  EXPECT_THROW(parse_program("( Hop R0 p ) ( Hop R1 p ) RETURN", {1, 1}), ParseError);
  EXPECT_THROW(parse_program("( Hop R01 p ) RETURN", {2, 3}), ParseError);
  try {
    parse_program("( Hop R0 p ) ( Hop R9 p ) RETURN", {1, 3});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 7u);
  }
}

TEST(ParseProgram, LaterVariablesBecomeUsable) {
  const auto p = parse_program("( Hop R0 a ) ( Equal R1 R0 b ) RETURN", {1, 3});
  EXPECT_EQ(p.expressions[1].vars, (std::vector<std::size_t>{1, 0}));
}

TEST(ExecHop, Examples) {
  const auto kb = fixture::hodgenville_kb();
  auto s = with(kb, {EntitySet::of_entities({"Hodgenville"})});
  EXPECT_EQ(exec_hop(s, 0, "PlaceOfBirthOf"), EntitySet::of_entities({"AbeLincoln"}));
  EXPECT_EQ(s.variable(1), EntitySet::of_entities({"AbeLincoln"}));

  auto empty = with(kb, {EntitySet{}});
  EXPECT_TRUE(exec_hop(empty, 0, "PlaceOfBirthOf").empty());

  const auto city = fixture::city_kb();
  auto c = with(city, {EntitySet::of_entities({"NYC", "LA"})});
  EXPECT_EQ(exec_hop(c, 0, "PopulationOf"), (EntitySet{Value(3900000.0), Value(8400000.0)}));
}

TEST(ExecArgMax, Examples) {
  const auto city = fixture::city_kb();
  auto s = with(city, {EntitySet::of_entities({"NYC", "LA"}), EntitySet::of_entities({"NYC"})});
  EXPECT_EQ(exec_argmax(s, 0, "PopulationOf"), EntitySet::of_entities({"NYC"}));
  EXPECT_EQ(exec_argmin(s, 0, "PopulationOf"), EntitySet::of_entities({"LA"}));
  EXPECT_EQ(exec_argmax(s, 1, "PopulationOf"), EntitySet::of_entities({"NYC"}));
  EXPECT_EQ(exec_argmin(s, 0, "Founded"), EntitySet::of_entities({"NYC"}));

  const auto tie = parse_kb("A\tp\t7\tnumber\nB\tp\t7\tnumber\nC\tp\t3\tnumber\n");
  auto t = with(tie, {EntitySet::of_entities({"A", "B", "C"})});
  EXPECT_EQ(exec_argmax(t, 0, "p"), EntitySet::of_entities({"A", "B"}));
}

TEST(ExecArgMax, ScoresEachEntityByItsOwnExtreme) {
  const auto kb = parse_kb("A\tp\t1\tnumber\nA\tp\t10\tnumber\nB\tp\t5\tnumber\nC\tq\t99\tnumber\n");
  auto s = with(kb, {EntitySet::of_entities({"A", "B", "C"})});
  EXPECT_EQ(exec_argmax(s, 0, "p"), EntitySet::of_entities({"A"}));
  EXPECT_EQ(exec_argmin(s, 0, "p"), EntitySet::of_entities({"A"}));
  auto only_b = with(kb, {EntitySet::of_entities({"B", "C"})});
  EXPECT_EQ(exec_argmin(only_b, 0, "p"), EntitySet::of_entities({"B"}));
}

TEST(ExecArgMax, EntityOrMixedValuesAreErrors) {
  const auto kb = parse_kb("A\tp\tX\tentity\nA\tm\t3\tnumber\nB\tm\t2001-01-01\tdate\n");
  auto s = with(kb, {EntitySet::of_entities({"A", "B"})});
  EXPECT_THROW(exec_argmax(s, 0, "p"), ExecError);
  EXPECT_THROW(exec_argmin(s, 0, "m"), ExecError);
  EXPECT_EQ(s.num_variables(), 1u);
}

TEST(ExecEqual, Examples) {
  const auto kb = parse_kb("AbeLincoln\tBornIn\tHodgenville\tentity\nGeorgeW\tBornIn\tNewHaven\tentity\n");
  auto s = with(kb, {EntitySet::of_entities({"AbeLincoln", "GeorgeW"}), EntitySet::of_entities({"Hodgenville"}),
                     EntitySet{}});
  EXPECT_EQ(exec_equal(s, 0, 1, "BornIn"), EntitySet::of_entities({"AbeLincoln"}));
  EXPECT_TRUE(exec_equal(s, 2, 1, "BornIn").empty());
  EXPECT_TRUE(exec_equal(s, 0, 2, "BornIn").empty());
}

TEST(MachineStateTest, UndefinedVariable) {
  const auto kb = fixture::hodgenville_kb();
  auto s = with(kb, {});
  EXPECT_THROW(exec_hop(s, 0, "PlaceOfBirthOf"), ExecError);
}

TEST(ExecuteProgram, Examples) {
  const auto kb = fixture::hodgenville_kb();
  const std::vector<EntitySet> init = {EntitySet::of_entities({"Hodgenville"})};
  EXPECT_EQ(execute_program(kb, parse_program("( Hop R0 PlaceOfBirthOf ) RETURN", {1, 3}), init),
            EntitySet::of_entities({"AbeLincoln"}));
  EXPECT_TRUE(execute_program(kb, parse_program("RETURN", {1, 3}), init).empty());
}

TEST(ExecuteProgram, CompositionMatchesManualSteps) {
  const auto city = fixture::city_kb();
  const std::vector<EntitySet> init = {EntitySet::of_entities({"USA"})};
  const auto prog = parse_program("( Hop R0 CityIn ) ( ArgMax R1 PopulationOf ) RETURN", {1, 3});
  auto s = with(city, init);
  exec_hop(s, 0, "CityIn");
  const auto manual = exec_argmax(s, 1, "PopulationOf");
  EXPECT_EQ(execute_program(city, prog, init), manual);
  EXPECT_EQ(manual, EntitySet::of_entities({"NYC"}));
}

TEST(ExecuteProgram, FailureDenotesEmpty) {
  const auto kb = fixture::hodgenville_kb();
  const std::vector<EntitySet> init = {EntitySet::of_entities({"Hodgenville"})};
  const auto prog = parse_program("( ArgMax R0 PlaceOfBirthOf ) RETURN", {1, 3});
  EXPECT_THROW(execute_program(kb, prog, init), ExecError);
  EXPECT_TRUE(denotation(kb, prog, init).empty());
}

TEST(InterpreterProperties, MatchesNaiveOracle) {
  std::size_t nonempty = 0, failing = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto kb = fixture::random_kb(seed, 15, 6);
    fixture::NaiveOracle oracle(kb);
    std::mt19937_64 rng(seed * 7 + 1);
    for (int i = 0; i < 40; ++i) {
      std::vector<EntitySet> init;
      std::vector<std::set<Value>> oinit;
      for (int k = 0; k < 2; ++k) {
        std::vector<Value> vs;
        for (int e = 0; e < 15; ++e)
          if (rng() % 4 == 0) vs.push_back(ent("e" + std::to_string(e)));
        init.emplace_back(vs);
        oinit.push_back(fixture::as_set(init.back()));
      }
      const auto prog = fixture::random_program(rng, 2, 6, 3);
      const auto want = oracle.run(prog, oinit);
      try {
        const auto got = execute_program(kb, prog, init);
        ASSERT_TRUE(want.has_value()) << serialize(prog);
        EXPECT_EQ(fixture::as_set(got), *want) << serialize(prog);
        nonempty += !got.empty();
      } catch (const ExecError&) {
        EXPECT_FALSE(want.has_value()) << serialize(prog);
        ++failing;
      }
    }
  }
  EXPECT_GT(nonempty, 100u);
  EXPECT_GT(failing, 20u);
}

TEST(InterpreterProperties, SerializeParseRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto prog = fixture::random_program(rng, 2, 5, 3);
    const auto text = serialize(prog);
    EXPECT_EQ(serialize(parse_program(text, {2, 3})), text);
    std::string spaced = "  ";
    for (const auto& w : split_whitespace(text)) spaced += w + " \t ";
    EXPECT_EQ(serialize(parse_program(spaced, {2, 3})), text);
  }
}

TEST(InterpreterProperties, DeterministicAndWriteOnce) {
  const auto kb = fixture::random_kb(11, 15, 6);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const std::vector<EntitySet> init = {EntitySet::of_entities({"e1", "e2", "e3"}), EntitySet::of_entities({"e4"})};
    const auto prog = fixture::random_program(rng, 2, 6, 3);
    const auto before = serialize_kb(kb);
    MachineState a(kb, init), b(kb, init);
    bool ok = true;
    try {
      for (const auto& e : prog.expressions) a.execute(e);
    } catch (const ExecError&) {
      ok = false;
    }
    if (ok) {
      for (const auto& e : prog.expressions) b.execute(e);
      ASSERT_EQ(a.num_variables(), b.num_variables());
      for (std::size_t v = 0; v < a.num_variables(); ++v) EXPECT_EQ(a.variable(v), b.variable(v));
      EXPECT_EQ(a.variable(0), init[0]);
      EXPECT_EQ(a.variable(1), init[1]);
    }
    EXPECT_EQ(serialize_kb(kb), before);
  }
}
