#include <gtest/gtest.h>

#include <filesystem>

#include "nalm/config.hpp"

using nalm::ConfigError;
using nalm::parse_config;

namespace {
const char* kExample = R"(# example
[experiment]
name = mixed
task = smt
preset = desk
seeds = [3, 5, 8]
ranges = U[1,2) U[-2,-1) wide

[train]
iterations = 1000
lambda_start = 400
lambda_end = 700
eval_every = 100

[model nmu]
unit = nmu

[model snmu]
unit = snmu
noise = uniform 1 5     # the default noise range

[model stg]
unit = stgnmu
stg_lambda = 0.01
grad_noise_eta = 0.3

[range wide]
interp = [3,4)
extrap = [4,9) u [-9,-4)
)";
}  // namespace

TEST(Config, ParsesExample) {
  const auto c = parse_config(kExample);
  EXPECT_EQ(c.name, "mixed");
  EXPECT_EQ(c.seeds(), (std::vector<std::uint64_t>{3, 5, 8}));
  ASSERT_EQ(c.models.size(), 3u);
  EXPECT_EQ(c.models[1].noise, nalm::NoiseConfig::fixed(1, 5));
  EXPECT_EQ(c.models[2].stg_lambda, 0.01);
  EXPECT_EQ(c.models[2].grad_noise_eta, 0.3);
  const auto t = c.train_config();
  EXPECT_EQ(t.iterations, 1000);
  EXPECT_EQ(t.batch_size, 128u);
  const auto pairs = c.resolve_ranges();
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[2].name(), "U[3,4)");
  EXPECT_EQ(pairs[2].extrap.parts.size(), 2u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, SerializeRoundTripAndHash) {
  const auto c = parse_config(kExample);
  const auto again = parse_config(nalm::serialize_config(c));
  EXPECT_EQ(again, c);
  EXPECT_EQ(nalm::config_hash(again), nalm::config_hash(c));
  auto moved = c;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(nalm::config_hash(moved), nalm::config_hash(c));
  auto changed = c;
  changed.train.lr = 0.002;
  EXPECT_NE(nalm::config_hash(changed), nalm::config_hash(c));
}

TEST(Config, DefaultsFollowPreset) {
  const auto c = parse_config("[experiment]\ntask = adt\npreset = paper\n[model a]\nunit = nmu\n");
  EXPECT_EQ(c.train_config(), nalm::TrainConfig::adt_paper());
  EXPECT_EQ(c.seeds(), std::vector<std::uint64_t>{0});
  EXPECT_EQ(c.resolve_ranges().size(), 9u);
  auto desk = c;
  desk.preset = nalm::Preset::Desk;
  EXPECT_EQ(desk.train_config(), nalm::TrainConfig::adt_desk());
  EXPECT_EQ(parse_config("[experiment]\nseeds = 4\n[model a]\nunit = nmu\n").seeds().size(), 4u);
}

TEST(Config, RejectsMalformedInput) {
  const char* bad[] = {
      "name = x\n",                                          // outside section
      "[experiment]\nname x\n",                              // no '='
      "[experiment]\ncolour = red\n",                        // unknown key
      "[experiment]\nname = a\nname = b\n",                  // duplicate
      "[experiment]\ntask = divide\n",                       // bad enum
      "[train]\niterations = lots\n",                        // bad number
      "[train]\niterations = 10.5\n",                        // not an integer
      "[model]\nunit = nmu\n",                               // missing name
      "[models a]\n",                                        // unknown section
      "[model a]\nunit = snmu\nnoise = uniform 5 1\n",       // bad noise
      "[range r]\ninterp = [1,2)\n",                         // missing extrap
      "[range r]\ninterp = [1,3)\nextrap = [2,4)\n",         // overlap
      "[experiment]\nseeds = [1, 2\n",                       // unterminated list
  };
  for (const char* text : bad) EXPECT_THROW(parse_config(text), ConfigError) << text;
  try {
    parse_config("[experiment]\n\n\ncolour = red\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Config, ValidateRejectsInconsistentExperiments) {
  auto expect_invalid = [](const std::string& text) {
    const auto c = parse_config(text);
    EXPECT_THROW(c.validate(), ConfigError) << text;
  };
  expect_invalid("[experiment]\nname = x\n");                                          // no models
  expect_invalid("[experiment]\nranges = U[3,4)\n[model a]\nunit = nmu\n");            // unknown range
  expect_invalid("[experiment]\nranges = U[1,2) 1_2\n[model a]\nunit = nmu\n");        // same range twice
  expect_invalid("[experiment]\ntask = adt\n[model m]\nunit = mlp\n");                 // mlp on adt
  expect_invalid("[experiment]\ntask = adt\ninput_size = 4\nsubset_ratio = 0.9\n[model m]\nunit = nmu\n");
  expect_invalid("[train]\neval_every = 333\n[model a]\nunit = nmu\n");                // does not divide
  expect_invalid("[experiment]\nseeds = []\n[model a]\nunit = nmu\n");                 // no seeds
  auto dup = parse_config("[model a]\nunit = nmu\n");
  dup.models.push_back(dup.models[0]);
  EXPECT_THROW(dup.validate(), ConfigError);
  // the same section twice repeats its keys
  EXPECT_THROW(parse_config("[model a]\nunit = nmu\n[model a]\nunit = snmu\n"), ConfigError);
}

TEST(Config, LoadMissingFileIsConfigError) {
  EXPECT_THROW(nalm::load_config("/nonexistent/config.cfg"), ConfigError);
}

TEST(Config, ShippedPresetsAreValid) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(NALM_PRESETS_DIR)) {
    if (e.path().extension() != ".cfg") continue;
    const auto c = nalm::load_config(e.path().string());
    EXPECT_NO_THROW(c.validate()) << e.path();
    EXPECT_EQ(c.name, e.path().stem().string());
    ++n;
  }
  EXPECT_GE(n, 5u);
}
