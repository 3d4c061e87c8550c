#include <gtest/gtest.h>

#include "support.hpp"

using namespace ig2i;

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  const auto kv = KeyValues::parse("# header\n  model.d = 8  \n\ntrain.steps=10 # trailing\r\n");
  EXPECT_EQ(kv.get("model.d", std::string()), "8");
  EXPECT_EQ(kv.get_size("train.steps", 0), 10u);
  EXPECT_EQ(kv.entries().size(), 2u);
}

TEST(KeyValues, ParseErrorsCarryLineNumbers) {
  try {
    KeyValues::parse("a = 1\n\nno equals sign\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    KeyValues::parse("a = 1\n = 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(KeyValues, TypedGetters) {
  const auto kv = KeyValues::parse("x = 0.25\nn = 7\nb = true\nbad = 1.5x\nneg = -3\n");
  EXPECT_DOUBLE_EQ(kv.get("x", 1.0), 0.25);
  EXPECT_EQ(kv.get("n", std::uint64_t{0}), 7u);
  EXPECT_TRUE(kv.get_bool("b", false));
  EXPECT_DOUBLE_EQ(kv.get("missing", 3.5), 3.5);
  EXPECT_THROW(kv.get("bad", 0.0), ConfigError);
  EXPECT_THROW(kv.get("neg", std::uint64_t{0}), ConfigError);
  EXPECT_THROW(kv.get_bool("x", false), ConfigError);
}

TEST(KeyValues, MergeOverridesAndUnusedKeys) {
  auto kv = KeyValues::parse("model.d = 8\ntrain.steps = 5\n");
  kv.merge(KeyValues::parse("train.steps = 9\ntrain.stpes = 1\n"));
  const auto tc = TrainConfig::read(kv);
  const auto mc = ModelConfig::read(kv);
  EXPECT_EQ(tc.steps, 9u);
  EXPECT_EQ(mc.d, 8u);
  EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"train.stpes"});
}

TEST(KeyValues, TextRoundTrip) {
  ModelConfig mc;
  mc.d = 12;
  mc.latent_scale = 0.1;
  TrainConfig tc;
  tc.optimizer = OptimizerKind::sgd;
  tc.learning_rate = 1.0 / 3.0;
  KeyValues kv;
  mc.write(kv);
  tc.write(kv);
  const auto back = KeyValues::parse(kv.to_text());
  EXPECT_EQ(ModelConfig::read(back).d, 12u);
  EXPECT_EQ(ModelConfig::read(back).latent_scale, 0.1);
  EXPECT_EQ(TrainConfig::read(back).learning_rate, 1.0 / 3.0);
  EXPECT_EQ(TrainConfig::read(back).optimizer, OptimizerKind::sgd);
}

TEST(KeyValues, BadEnumValues) {
  EXPECT_THROW(ModelConfig::read(KeyValues::parse("model.graph_encoder = gnn\n")), ConfigError);
  EXPECT_THROW(TrainConfig::read(KeyValues::parse("train.optimizer = lbfgs\n")), ConfigError);
}

TEST(NumberList, Parses) {
  EXPECT_EQ(parse_number_list("0,0.5,1,2,4"), (std::vector<double>{0, 0.5, 1, 2, 4}));
  EXPECT_THROW(parse_number_list("1,,2"), ConfigError);
  EXPECT_THROW(parse_number_list("1,two"), ConfigError);
}
