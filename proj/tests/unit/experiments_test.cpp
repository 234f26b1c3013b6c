#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace ddcm;

namespace {

GmmModel small_model() {
  std::mt19937_64 gen(12);
  return GmmModel(test::random_gmm(gen, 4), build_schedule(40, 1e-3, 0.15));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> lines(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    const auto end = csv.find("\r\n", pos);
    out.push_back(csv.substr(pos, end - pos));
    pos = end + 2;
  }
  return out;
}

}  // namespace

TEST(Experiments, GenerationGridWithBaseline) {
  const GmmModel model = small_model();
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kGenerationVsK;
  spec.samples = 20;
  spec.seed = 3;
  spec.grid = {{40, 64}, {40, 2}};
  const auto report = run_experiment(model, spec);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].point.K, 2u);
  EXPECT_EQ(report.rows[1].point.K, 64u);
  EXPECT_TRUE(report.rows[2].point.baseline);
  EXPECT_EQ(report.rows[2].payload_bits, 0u);
  EXPECT_EQ(report.rows[0].payload_bits, 1u + 39u);
}

TEST(Experiments, DeterministicApartFromTiming) {
  const GmmModel model = small_model();
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kRateDistortion;
  spec.samples = 10;
  spec.seed = 9;
  spec.grid = {{40, 4}, {40, 16, 2, 4}, {20, 16}};
  spec.threads = 2;
  const auto a = to_csv(run_experiment(model, spec), false);
  spec.threads = 1;
  const auto b = to_csv(run_experiment(model, spec), false);
  EXPECT_EQ(a, b);
}

TEST(Experiments, RateDistortionRows) {
  const GmmModel model = small_model();
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kRateDistortion;
  spec.samples = 30;
  spec.grid = {{40, 2}, {40, 256}};
  const auto report = run_experiment(model, spec);
  for (const auto& row : report.rows) {
    CodecConfig c;
    c.base_schedule = model.schedule().descriptor();
    c.k_schedule = KSchedule::uniform(40, row.point.K);
    EXPECT_EQ(row.payload_bits, payload_bits(c));
    EXPECT_NEAR(row.psnr, psnr(row.mse, 1.0), 1e-12);
  }
  EXPECT_LT(report.rows[1].mse, report.rows[0].mse);
}

TEST(Experiments, CsvSchema) {
  const GmmModel model = small_model();
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kPosteriorInpainting;
  spec.samples = 5;
  spec.observed = {0, 1};
  spec.grid = {{40, 8}};
  const auto csv = to_csv(run_experiment(model, spec));
  const auto rows = lines(csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(split(rows[0]), csv_columns());
  const auto fields = split(rows[1]);
  ASSERT_EQ(fields.size(), csv_columns().size());
  EXPECT_EQ(fields[0], "posterior_inpainting");
  EXPECT_EQ(fields[1], "T=40;K=8;M=1;C=2;ktilde=0;lambda=0");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
}

TEST(Experiments, GuidanceAndEditingReportTargetProbability) {
  const GmmModel model(test::two_class_gmm(4, 1.5), build_schedule(40, 1e-3, 0.15));
  ExperimentSpec spec;
  spec.kind = ExperimentKind::kGuidance;
  spec.samples = 10;
  spec.target_label = 1;
  spec.grid = {{40, 16, 1, 2, 16}};
  auto report = run_experiment(model, spec);
  ASSERT_TRUE(report.rows[0].target_prob.has_value());
  spec.kind = ExperimentKind::kEditing;
  spec.source_label = 0;
  report = run_experiment(model, spec);
  ASSERT_TRUE(report.rows[0].target_prob.has_value());
}

TEST(Experiments, RejectsBadSpecs) {
  const GmmModel model = small_model();
  ExperimentSpec spec;
  EXPECT_THROW(run_experiment(model, spec), InvalidArgument);
  spec.grid = {{41, 4}};
  EXPECT_THROW(run_experiment(model, spec), InvalidArgument);
  spec.grid = {{40, 4}};
  spec.kind = ExperimentKind::kPosteriorInpainting;
  EXPECT_THROW(run_experiment(model, spec), InvalidArgument);
  spec.kind = ExperimentKind::kGuidance;
  EXPECT_THROW(run_experiment(model, spec), InvalidArgument);
  EXPECT_EQ(parse_experiment("generation"), ExperimentKind::kGenerationVsK);
  EXPECT_THROW(parse_experiment("nope"), InvalidArgument);
}
