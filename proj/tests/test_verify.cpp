#include <gtest/gtest.h>

#include <sstream>

#include "nalm/verify.hpp"

TEST(Verify, QuickSuitePasses) {
  std::ostringstream log;
  EXPECT_EQ(nalm::cmd_verify(nalm::VerifyLevel::Quick, log), 0) << log.str();
  EXPECT_NE(log.str().find("checks passed"), std::string::npos);
}

TEST(Verify, InjectedFaultIsCaughtByCancellationOnly) {
  const auto checks = nalm::run_verify(nalm::VerifyLevel::Quick, nalm::faulty_snmu_training);
  std::size_t failed = 0;
  for (const auto& c : checks) {
    if (c.pass) continue;
    ++failed;
    EXPECT_NE(c.name.find("cancellation"), std::string::npos) << c.name;
  }
  EXPECT_EQ(failed, 1u);
  std::ostringstream log;
  EXPECT_EQ(nalm::cmd_verify(nalm::VerifyLevel::Quick, log, nalm::faulty_snmu_training), 1);
  EXPECT_NE(log.str().find("[FAIL] sNMU noise cancellation"), std::string::npos);
}

TEST(Verify, FaultyDenominatorDiffersFromReference) {
  const auto X = nalm::Matrix::row({2.0, 3.0});
  const auto W = nalm::Matrix::column({0.5, 1.0});
  const auto N = nalm::Matrix::row({2.0, 4.0});
  // reference: (0.5*4 + 0.5)(12) / ((0.5*2 + 0.5)(4)) = 30 / 6
  EXPECT_NEAR(nalm::reference_snmu_training(X, W, N).item(), 5.0, 1e-12);
  // faulty: 30 / (2 * 4)
  EXPECT_NEAR(nalm::faulty_snmu_training(X, W, N).item(), 3.75, 1e-12);
}

TEST(Verify, LevelParsing) {
  EXPECT_EQ(nalm::parse_verify_level("full"), nalm::VerifyLevel::Full);
  EXPECT_THROW(nalm::parse_verify_level("medium"), std::invalid_argument);
}
