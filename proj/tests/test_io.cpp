#include <gtest/gtest.h>

#include <filesystem>

#include "nalm/io.hpp"

using nalm::Matrix;

TEST(Io, NumbersRoundTripIncludingNonFinite) {
  for (double v : {0.1, 1.0 / 3, -2.5e-300, 6.02214076e23}) {
    EXPECT_EQ(nalm::num_from_json(nalm::num_to_json(v)), v);
    EXPECT_EQ(std::stod(nalm::fmt_num(v)), v);
  }
  EXPECT_TRUE(std::isnan(nalm::num_from_json(nalm::num_to_json(NAN))));
  EXPECT_EQ(nalm::num_from_json(nalm::num_to_json(-INFINITY)), -INFINITY);
  EXPECT_EQ(nalm::num_to_json(INFINITY), "inf");
  EXPECT_THROW(nalm::num_from_json("x"), std::runtime_error);
}

TEST(Io, RunRecordRoundTrip) {
  nalm::RunRecord r;
  r.id = "snmu__1_2__s3";
  r.model = nalm::ModelSpec::snmu(nalm::NoiseConfig::fixed(1, 5));
  r.model.grad_noise_eta = 0.1;
  r.task = {nalm::TaskKind::Adt, 100, 0.25, 0.5};
  r.adt = nalm::AdtSpec{};
  r.range = "U[1,2)";
  r.seed = 3;
  r.evals = {{0, 1.5, 2.5, 3.5, 0.25, 0.0}, {100, 0.1, 1.0 / 3, INFINITY, NAN, 10}};
  r.best = {100, 1.0 / 3, INFINITY, NAN, {{"nau.W", Matrix::from_rows({{0.1, -0.2}, {1, 0}})}}};
  r.final_weights = {{"snmu.W", Matrix::column({0.99999999999999989, 1e-17})}};
  const auto back = nalm::run_from_json(nlohmann::json::parse(nalm::to_json_value(r).dump()));
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.model, r.model);
  EXPECT_EQ(back.task, r.task);
  EXPECT_EQ(back.adt, r.adt);
  EXPECT_EQ(back.evals[0], r.evals[0]);
  EXPECT_EQ(back.evals[1].val_mse, 1.0 / 3);
  EXPECT_TRUE(std::isinf(back.evals[1].extrap_mse));
  EXPECT_TRUE(std::isnan(back.evals[1].sparsity));
  EXPECT_EQ(back.best.weights, r.best.weights);
  EXPECT_EQ(back.final_weights, r.final_weights);
  const std::string csv = nalm::series_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,train_loss,val_mse,extrap_mse,sparsity,lambda");
  EXPECT_NE(csv.find("100,0.10000000000000001,0.33333333333333331,inf,nan,10"), std::string::npos);
}

TEST(Io, SummaryRoundTripAndCsv) {
  nalm::SummaryRecord s;
  s.model = "nmu";
  s.range = "U[-2,2)";
  s.n_seeds = 2;
  s.successes = 1;
  s.success_rate = 0.5;
  s.success_ci = {0.1, 0.9};
  s.convergence = nalm::MeanInterval{100, 90, 110};
  s.threshold = {1e-5, 1.2e-7, 1000000, 20220913};
  s.seeds = {0, 1};
  s.config_hash = "deadbeef";
  const auto back = nalm::summary_from_json(nlohmann::json::parse(nalm::to_json_value(s).dump()));
  EXPECT_EQ(back.range, s.range);
  EXPECT_EQ(back.convergence->hi, 110);
  EXPECT_FALSE(back.sparsity.has_value());
  EXPECT_EQ(back.seeds, s.seeds);
  EXPECT_EQ(back.threshold.simulated_mse, 1.2e-7);
  const std::string row = nalm::summary_csv_row(s);
  EXPECT_EQ(row.substr(0, 20), "nmu,\"U[-2,2)\",2,1,0,");
  // header and row have the same number of fields (quoted fields hold no commas except the range)
  const std::string header = nalm::kSummaryCsvHeader;
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ',') - 1);
}

TEST(Io, AtomicWriteReplacesFile) {
  const auto dir = std::filesystem::temp_directory_path() / "nalm_io_test";
  std::filesystem::create_directories(dir);
  nalm::atomic_write(dir / "a.txt", "one");
  nalm::atomic_write(dir / "a.txt", "two");
  EXPECT_EQ(nalm::read_file(dir / "a.txt"), "two");
  EXPECT_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  EXPECT_THROW(nalm::read_file(dir / "missing"), std::runtime_error);
  EXPECT_THROW(nalm::atomic_write(dir / "no" / "such" / "dir.txt", "x"), std::runtime_error);
  std::filesystem::remove_all(dir);
}
