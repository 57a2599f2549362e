#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "cbc/io.hpp"
#include "test_support.hpp"

using namespace cbc;
using test_support::error_code_of;

namespace {

std::string golden(const std::string& name) {
  std::ifstream in(std::string(CBC_GOLDEN_DIR) + "/" + name, std::ios::binary);
  EXPECT_TRUE(in.good()) << name;
  return {std::istreambuf_iterator<char>(in), {}};
}

ContinuationPoint point(double lambda, double amplitude, double residual, double effort, int iters, double h,
                        bool initial, bool capped, double knot_error) {
  ContinuationPoint p;
  p.lambda = lambda;
  p.amplitude = amplitude;
  p.residual_norm = residual;
  p.rms_effort = effort;
  p.newton_iterations = iters;
  p.stepsize = h;
  p.initial = initial;
  p.capped = capped;
  p.knot_error = knot_error;
  return p;
}

Branch golden_branch() {
  Branch b;
  b.points.push_back(point(0.75, 0.335, 0, 0, 0, 0, true, false, 0.00961695));
  b.points.push_back(point(0.755, 0.336, 0, 0, 0, 0, true, false, 0.00961695));
  b.points.push_back(point(0.855, 0.32, 1.3e-3, 0.015, 1, 0.1, false, false, 0.0097));
  b.points.push_back(point(0.955, 0.306, 6e-3, 0.018, 3, 0.1, false, true, 0.0099));
  return b;
}

std::vector<ShootingOrbit> golden_orbits() {
  ShootingOrbit a;
  a.lambda = 1.0;
  a.anchor = {0.5, 0.25};
  a.period = 3.1491;
  a.amplitude = 0.28609;
  a.multiplier = {0.01, 0.0};
  a.stable = true;
  ShootingOrbit b;
  b.lambda = 0.64;
  b.anchor = {0.4, 0.2};
  b.period = 3.5;
  b.amplitude = 0.2;
  b.multiplier = {0.0, -1.5};
  b.stable = false;
  return {a, b};
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(BranchCsv, MatchesGolden) {
  std::ostringstream out;
  write_branch_csv(out, golden_branch());
  EXPECT_EQ(out.str(), golden("branch.csv"));
}

TEST(BranchCsv, RoundTripsExactly) {
  std::istringstream in(golden("branch.csv"));
  const auto rows = read_branch_csv(in);
  const auto b = golden_branch();
  ASSERT_EQ(rows.size(), b.points.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].index, static_cast<int>(i));
    EXPECT_EQ(rows[i].lambda, b.points[i].lambda);
    EXPECT_EQ(rows[i].amplitude, b.points[i].amplitude);
    EXPECT_EQ(rows[i].residual_norm, b.points[i].residual_norm);
    EXPECT_EQ(rows[i].rms_control_effort, b.points[i].rms_effort);
    EXPECT_EQ(rows[i].newton_iters, b.points[i].newton_iterations);
    EXPECT_EQ(rows[i].stepsize, b.points[i].stepsize);
    EXPECT_EQ(rows[i].flags, point_flags(b.points[i]));
    EXPECT_EQ(rows[i].knot_error, b.points[i].knot_error);
  }
}

TEST(BranchCsv, RandomValuesRoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> e(-30.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Branch b;
  for (int i = 0; i < 50; ++i) {
    b.points.push_back(point(u(rng) * 3.0, std::pow(10.0, e(rng)), std::pow(10.0, e(rng)), std::pow(10.0, e(rng)),
                             i % 7, u(rng), i == 0, i % 5 == 3, std::pow(10.0, e(rng))));
  }
  std::stringstream s;
  write_branch_csv(s, b);
  const auto rows = read_branch_csv(s);
  ASSERT_EQ(rows.size(), b.points.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].lambda, b.points[i].lambda);
    EXPECT_EQ(rows[i].amplitude, b.points[i].amplitude);
    EXPECT_EQ(rows[i].residual_norm, b.points[i].residual_norm);
    EXPECT_EQ(rows[i].knot_error, b.points[i].knot_error);
  }
}

TEST(BranchCsv, InitialAndCappedCombine) {
  EXPECT_EQ(point_flags(point(0, 0, 0, 0, 0, 0, true, true, 0)), "initial|capped");
  EXPECT_EQ(point_flags(point(0, 0, 0, 0, 0, 0, false, false, 0)), "");
}

TEST(BranchCsv, WrongHeaderIsASchemaMismatch) {
  std::istringstream in("index,lambda,amplitude\n0,1,2\n");
  EXPECT_EQ(error_code_of([&] { (void)read_branch_csv(in); }), Errc::SchemaMismatch);
}

TEST(BranchCsv, BadFieldNamesTheRow) {
  std::string text = golden("branch.csv");
  const auto pos = text.find("0.85499999999999998");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 19, "abc");
  std::istringstream in(text);
  const auto m = message_of([&] { (void)read_branch_csv(in); });
  EXPECT_NE(m.find("row 4"), std::string::npos) << m;
  EXPECT_NE(m.find("lambda"), std::string::npos) << m;
  std::istringstream again(text);
  EXPECT_EQ(error_code_of([&] { (void)read_branch_csv(again); }), Errc::SchemaMismatch);
}

TEST(BranchCsv, ShortRowIsASchemaMismatch) {
  std::istringstream in(std::string(kBranchHeader) + "\n0,1,2,3\n");
  const auto m = message_of([&] { (void)read_branch_csv(in); });
  EXPECT_NE(m.find("row 2"), std::string::npos) << m;
}

TEST(BranchCsv, CrlfIsAccepted) {
  std::string text = golden("branch.csv");
  std::string crlf;
  for (char c : text) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  std::istringstream in(crlf);
  EXPECT_EQ(read_branch_csv(in).size(), 4u);
}

TEST(OracleCsv, MatchesGolden) {
  std::ostringstream out;
  write_oracle_csv(out, golden_orbits());
  EXPECT_EQ(out.str(), golden("oracle.csv"));
}

TEST(OracleCsv, ReadsStability) {
  std::istringstream in(golden("oracle.csv"));
  const auto rows = read_oracle_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].stable);
  EXPECT_FALSE(rows[1].stable);
  EXPECT_EQ(rows[1].multiplier, 1.5);
  EXPECT_EQ(rows[0].period, 3.1491);
}

TEST(OracleCsv, UnknownStabilityIsASchemaMismatch) {
  std::istringstream in(std::string(kOracleHeader) + "\n1,0,0,1,1,0.5,neutral\n");
  EXPECT_EQ(error_code_of([&] { (void)read_oracle_csv(in); }), Errc::SchemaMismatch);
}

TEST(NoiseCsv, MatchesGoldenAndRoundTrips) {
  const std::vector<NoiseRow> rows{{7, 0, 0.0287, 0.0284}, {9, 1, 0.03, 0.031}};
  std::ostringstream out;
  write_noise_csv(out, rows);
  EXPECT_EQ(out.str(), golden("noise.csv"));
  std::istringstream in(out.str());
  const auto back = read_noise_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].parameters, 9);
  EXPECT_EQ(back[1].seed, 1u);
  EXPECT_EQ(back[0].fourier_rmse, 0.0284);
}

TEST(SplineDump, RoundTrip) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto knots = test_support::random_interior(rng);
    Eigen::VectorXd c(static_cast<Eigen::Index>(knots.size() + 1));
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = g(rng);
    const SplineCurve curve(PeriodicBasis(knots), c);
    std::stringstream s;
    write_spline_dump(s, curve, 0.125);
    const auto d = read_spline_dump(s);
    EXPECT_EQ(d.interior_knots, knots);
    EXPECT_EQ(d.coefficients, c);
    EXPECT_EQ(d.fit_error, 0.125);
    EXPECT_EQ(d.curve()(0.37), curve(0.37));
  }
}

TEST(SplineDump, CountMismatchRejected) {
  std::istringstream in("interior_knots 0.25 0.5 0.75\ncoefficients 1 2 3\nfit_error 0\n");
  EXPECT_EQ(error_code_of([&] { (void)read_spline_dump(in); }), Errc::SchemaMismatch);
  std::istringstream wrong("knots 0.5\ncoefficients 1 2\nfit_error 0\n");
  EXPECT_EQ(error_code_of([&] { (void)read_spline_dump(wrong); }), Errc::SchemaMismatch);
}

TEST(Plot, EmptyInputHasAxesOnly) {
  const std::string svg = emit_plot({}, {});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("amplitude"), std::string::npos);
  EXPECT_NE(svg.find(">lambda<"), std::string::npos);
  EXPECT_EQ(svg.find("<circle"), std::string::npos);
  EXPECT_EQ(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_EQ(svg.substr(svg.size() - 7), "</svg>\n");
}

TEST(Plot, OverlayDrawsEveryPointAndBothStabilities) {
  std::istringstream bin(golden("branch.csv"));
  std::istringstream oin(golden("oracle.csv"));
  const auto rows = read_branch_csv(bin);
  auto orc = read_oracle_csv(oin);
  orc.push_back({0.7, 0.4, 0.2, 3.6, 0.1, 1.4, false});
  const std::string svg = emit_plot({{"forward", rows}, {"backward & <more>", rows}}, orc, "f");
  std::size_t circles = 0;
  for (auto p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 2 * rows.size());
  EXPECT_NE(svg.find("backward &amp; &lt;more&gt;"), std::string::npos);
  EXPECT_NE(svg.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(svg.find(">f<"), std::string::npos);
}

TEST(Plot, Deterministic) {
  std::istringstream bin(golden("branch.csv"));
  const auto rows = read_branch_csv(bin);
  EXPECT_EQ(emit_plot({{"a", rows}}, {}), emit_plot({{"a", rows}}, {}));
}
