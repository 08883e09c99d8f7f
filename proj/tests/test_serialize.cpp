#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "dsm/dsm.hpp"

using namespace dsm;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

struct Cleanup {
  std::string path;
  ~Cleanup() { std::remove(path.c_str()); }
};

}  // namespace

TEST(Fmt17, RoundTripsBitExactly) {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    double x = (rng.uniform() - 0.5) * std::pow(10.0, 300.0 * (rng.uniform() - 0.5));
    EXPECT_EQ(std::stod(fmt17(x)), x);
  }
  EXPECT_EQ(std::stod(fmt17(0.1)), 0.1);
  EXPECT_EQ(std::stod(fmt17(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(fmt17(0.0), "0");
  EXPECT_EQ(std::stod(fmt17(-1e-300)), -1e-300);
}

TEST(FlowCsv, ShapeAndEmbeddedConfig) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  FlowConfig cfg;
  cfg.reg = RegParams{0.1, 1.0, 1.0, 1.0};
  cfg.delta = 1e-4;
  FlowTrace tr = integrate_dsm(op, op.u0, cfg);
  Json config{{"problem", "linear-diag"}, {"eps", 0.1}};
  Cleanup file{"tmp_flow.csv"};
  write_flow_csv(tr, config, file.path);

  auto lines = lines_of(slurp(file.path));
  ASSERT_GE(lines.size(), 3u);
  ASSERT_EQ(lines[0].rfind("# {", 0), 0u);
  Json parsed = Json::parse(lines[0].substr(2));
  EXPECT_EQ(parsed["problem"], "linear-diag");
  EXPECT_EQ(lines[1], "t,residual,w_0,w_1");
  EXPECT_EQ(lines.size(), 2u + tr.times.size());

  std::stringstream first(lines[2]);
  std::string cell;
  std::getline(first, cell, ',');
  EXPECT_EQ(std::stod(cell), tr.times[0]);
  std::getline(first, cell, ',');
  EXPECT_EQ(std::stod(cell), tr.residual_norms[0]);
  std::getline(first, cell, ',');
  EXPECT_EQ(std::stod(cell), tr.states[0][0]);
}

TEST(PathCsv, StatusColumn) {
  RatePathResult path;
  PathRecord good;
  good.eps = 0.1;
  good.v_eps = {1.0};
  good.residual = 1e-9;
  good.error = 0.05;
  good.iterations = 4;
  good.ok = true;
  PathRecord bad;
  bad.eps = 0.01;
  bad.ok = false;
  bad.message = "solver exploded";
  path.records = {good, bad};

  Cleanup file{"tmp_path.csv"};
  write_path_csv(path, Json{{"tag", "unit"}}, file.path);
  auto lines = lines_of(slurp(file.path));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1], "eps,residual,error,iters,method,status");
  EXPECT_NE(lines[2].find(",ok"), std::string::npos);
  EXPECT_NE(lines[3].find(",failed"), std::string::npos);
  EXPECT_NE(lines[3].find(",,"), std::string::npos);  // absent error stays an empty cell
}

TEST(ContractionCsv, SingleRow) {
  ContractionDiagnostics d;
  d.r = 0.01;
  d.rho = 0.2;
  d.eta = 0.1;
  d.iterations = 3;
  d.converged = true;
  d.z_star = {3e-4, -4e-4};
  Cleanup file{"tmp_contract.csv"};
  write_contraction_csv(d, 0.05, NormKind::L2, Json::object(), file.path);
  auto lines = lines_of(slurp(file.path));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1], "eps,r,rho,eta,iters,converged,err");
  EXPECT_EQ(lines[2].rfind(fmt17(0.05) + ",", 0), 0u);
  EXPECT_NE(lines[2].find("," + fmt17(norm(d.z_star, NormKind::L2))), std::string::npos);
}

TEST(JsonSerialization, OptionalFieldsBecomeNull) {
  RatePathResult path;
  PathRecord rec;
  rec.eps = 0.1;
  rec.ok = true;
  path.records.push_back(rec);
  Json j = to_json(path);
  EXPECT_TRUE(j["k_hat"].is_null());
  EXPECT_TRUE(j["c_hat"].is_null());
  EXPECT_TRUE(j["records"][0]["error"].is_null());

  path.k_hat = 0.97;
  path.c_hat = 1.3;
  path.fit_rms = 0.01;
  Json j2 = to_json(path);
  EXPECT_DOUBLE_EQ(j2["k_hat"].get<double>(), 0.97);
}

TEST(JsonSerialization, TraceKeysPresent) {
  ProblemOp op = make_linear_diag({1.0}, {1.0}, NormKind::L2);
  FlowConfig cfg;
  cfg.reg = RegParams{0.1, 1.0, 1.0, 1.0};
  cfg.delta = 1e-3;
  FlowTrace tr = integrate_dsm(op, op.u0, cfg);
  Json j = to_json(tr);
  for (const char* key : {"F0", "eps", "t_star", "w0", "w_inf", "accepted_steps", "trace"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["trace"].size(), tr.times.size());
  EXPECT_DOUBLE_EQ(j["trace"][0]["t"].get<double>(), 0.0);
}

TEST(JsonSerialization, FileRoundTrip) {
  Json j{{"alpha", 0.1}, {"vec", to_json(Vec{1.0, 2.0})}, {"name", "case"}};
  Cleanup file{"tmp_round.json"};
  write_json_file(j, file.path);
  Json back = Json::parse(slurp(file.path));
  EXPECT_EQ(back, j);
}

TEST(Artifacts, RewriteIsByteIdentical) {
  ProblemOp op = make_linear_diag({1.0, 0.5}, {1.0, 1.0}, NormKind::L2);
  FlowConfig cfg;
  cfg.reg = RegParams{0.1, 1.0, 1.0, 1.0};
  cfg.delta = 1e-4;
  FlowTrace tr = integrate_dsm(op, op.u0, cfg);
  Cleanup a{"tmp_rep_a.csv"};
  Cleanup b{"tmp_rep_b.csv"};
  write_flow_csv(tr, Json{{"eps", 0.1}}, a.path);
  FlowTrace tr2 = integrate_dsm(op, op.u0, cfg);
  write_flow_csv(tr2, Json{{"eps", 0.1}}, b.path);
  EXPECT_EQ(slurp(a.path), slurp(b.path));
}
