#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/lowess.hpp"

using namespace rivercast;

namespace {

// Direct local-linear fit at each point over its floor(f*n) nearest neighbours.
std::vector<double> naive_lowess(const std::vector<double>& x, const std::vector<double>& y,
                                 double f) {
  const std::size_t n = x.size();
  const auto k = std::max<std::size_t>(2, static_cast<std::size_t>(f * static_cast<double>(n) + 1e-10));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j) d[j] = std::abs(x[j] - x[i]);
    std::vector<double> sorted = d;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k - 1), sorted.end());
    const double h = sorted[k - 1];
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double u = d[j] / h;
      if (u >= 1.0) continue;
      const double w = std::pow(1.0 - u * u * u, 3);
      sw += w;
      sx += w * x[j];
      sy += w * y[j];
      sxx += w * x[j] * x[j];
      sxy += w * x[j] * y[j];
    }
    const double mx = sx / sw, my = sy / sw;
    const double var = sxx / sw - mx * mx;
    const double slope = var > 0 ? (sxy / sw - mx * my) / var : 0.0;
    out[i] = my + slope * (x[i] - mx);
  }
  return out;
}

const std::vector<double> ref_x = {0.5, 1, 1.7, 2.2000000000000002, 3, 3.1000000000000001,
                                   4.4000000000000004, 5, 5.9000000000000004, 6.2999999999999998,
                                   7, 7.7999999999999998, 8.0999999999999996, 9.4000000000000004,
                                   10};
const std::vector<double> ref_y = {
    0.52942553860420305, 0.94147098480789648, 1.1616648104524685, 1.0284964038195901,
    0.44112000805986729, 0.35158066243329056, 2.4883979261104843, -0.45892427466313845,
    0.21612333516976406, 0.64681390048434972, 1.3569865987187892, -0.2214566546253951,
    1.7798898108450865, 0.96477542545335782, 0.45597888911063023};
// Reference smoother output (frac 0.5, no interpolation shortcut).
const std::vector<double> ref_plain = {
    0.84355757306695389, 0.84224691949777664, 0.81136946976352164, 0.78543826903478053,
    0.83363599339913574, 0.92620615799543038, 0.77629042030824202, 0.91958037344723575,
    0.56771097412839466, 0.56426331235147775, 0.73669035567668661, 0.92763234124682348,
    0.92223569344555312, 0.75085604676365691, 0.6784096842388958};
const std::vector<double> ref_robust = {
    0.86771859989502398, 0.85116536985579538, 0.80281807925690418, 0.76965010170197634,
    0.437854055450494,   0.38203268890903269, 0.00097024065277965393, -0.45145679255645643,
    0.29503177642351303, 0.65391358277472911, 1.1698690658554318,  1.3321428820181742,
    1.3018681744905591,  0.85237448873106425, 0.61381233738312502};

}  // namespace

TEST_CASE("affine data is reproduced exactly") {
  std::vector<double> x, y;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(2.0, 20.0);
  for (int i = 0; i < 60; ++i) {
    x.push_back(u(rng));
    y.push_back(0.03 - 0.004 * x.back());
  }
  for (int it : {0, 3}) {
    auto c = LowessCurve::fit(x, y, 0.5, it);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(c(x[i]) - y[i]) < 1e-8);
  }
}

TEST_CASE("quadratic with small noise") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.001);
  std::vector<double> x, y;
  auto truth = [](double s) { return 0.001 * (s - 10.0) * (s - 10.0) - 0.02; };
  for (int i = 0; i < 50; ++i) {
    x.push_back(2.0 + 18.0 * i / 49.0);
    y.push_back(truth(x.back()) + noise(rng));
  }
  auto c = LowessCurve::fit(x, y, 0.5, 0);
  for (std::size_t i = 5; i + 5 < x.size(); ++i) CHECK(std::abs(c(x[i]) - truth(x[i])) < 0.01);
}

TEST_CASE("non-robust fit equals a direct local regression") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    const int n = 10 + trial * 7;
    for (int i = 0; i < n; ++i) {
      x.push_back(u(rng));
      y.push_back(std::sin(x.back()) + noise(rng));
    }
    const double f = 0.3 + 0.03 * trial;
    auto c = LowessCurve::fit(x, y, f, 0);
    auto want = naive_lowess(x, y, f);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(c(x[i]) - want[i]) < 1e-10);
  }
}

TEST_CASE("matches reference smoother values") {
  auto plain = LowessCurve::fit(ref_x, ref_y, 0.5, 0);
  auto robust = LowessCurve::fit(ref_x, ref_y, 0.5, 3);
  for (std::size_t i = 0; i < ref_x.size(); ++i) {
    CHECK(std::abs(plain(ref_x[i]) - ref_plain[i]) < 1e-12);
    CHECK(std::abs(robust(ref_x[i]) - ref_robust[i]) < 1e-12);
  }
}

TEST_CASE("robust passes downweight outliers") {
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i);
    y.push_back(1.0 + (i % 9 == 4 ? 25.0 : 0.0));
  }
  auto plain = LowessCurve::fit(x, y, 0.5, 0);
  auto robust = LowessCurve::fit(x, y, 0.5, 3);
  double err_plain = 0, err_robust = 0;
  for (double v : x) {
    err_plain += std::abs(plain(v) - 1.0);
    err_robust += std::abs(robust(v) - 1.0);
  }
  CHECK(err_robust < 0.1 * err_plain);
}

TEST_CASE("interpolation, extrapolation and errors") {
  const double x[] = {3.0, 1.0, 2.0, 2.0}, y[] = {6.0, 2.0, 4.0, 4.0};
  auto c = LowessCurve::fit(x, y, 1.0, 0);
  CHECK(c.knots().size() == 3);
  CHECK(c(1.5) == doctest::Approx(3.0));
  CHECK(c(-10.0) == doctest::Approx(c(1.0)));
  CHECK(c(10.0) == doctest::Approx(c(3.0)));
  const double one[] = {1.0};
  CHECK_THROWS_AS(LowessCurve::fit(one, one), ContractError);
  CHECK_THROWS_AS(LowessCurve::fit(x, y, 0.0), ContractError);
  CHECK_THROWS_AS(LowessCurve::fit(x, y, 1.5), ContractError);
  CHECK_THROWS_AS(LowessCurve::fit(x, one), ContractError);
}
