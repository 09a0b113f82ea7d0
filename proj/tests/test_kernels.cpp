#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"

using namespace sviplus::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (isa_supported(Isa::Avx2)) out.push_back(avx2_table());
  if (isa_supported(Isa::Neon)) out.push_back(neon_table());
  return out;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13 * (1.0 + std::abs(b[i]))) << i;
}

}  // namespace

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(isa_supported(Isa::Scalar));
  EXPECT_EQ(scalar_table().isa, Isa::Scalar);
  EXPECT_EQ(parse_isa("avx2"), Isa::Avx2);
  EXPECT_EQ(isa_name(Isa::Neon), "neon");
  EXPECT_THROW(parse_isa("sse9"), sviplus::ContractError);
}

TEST(Kernels, ScalarReferenceValues) {
  const auto& s = scalar_table();
  std::vector<double> x{1, 2, 3}, y{4, 5, 6};
  EXPECT_EQ(s.dot(x.data(), y.data(), 3), 32.0);
  EXPECT_EQ(s.sum(x.data(), 3), 6.0);
  s.axpy(2.0, x.data(), y.data(), 3);
  EXPECT_EQ(y, (std::vector<double>{6, 9, 12}));
  std::vector<double> out(3);
  std::vector<double> eta{1, 1, 1};
  s.blend(0.25, x.data(), eta.data(), y.data(), out.data(), 3);
  // 0.75 x + 0.25 (1 + y)
  EXPECT_EQ(out, (std::vector<double>{0.75 + 1.75, 1.5 + 2.5, 2.25 + 3.25}));
  std::vector<unsigned> idx{2, 0};
  std::vector<double> acc(3, 0.0);
  s.scatter_axpy(-1.0, x.data(), idx.data(), acc.data(), 2);
  EXPECT_EQ(acc, (std::vector<double>{-2, 0, -1}));
}

// every vector variant compiled in and supported by this CPU must agree with scalar
TEST(Kernels, VariantsMatchScalar) {
  const auto tables = vector_tables();
  if (tables.empty()) GTEST_SKIP() << "no vector kernel variant on this machine";
  std::mt19937_64 rng(7);
  const auto& ref = scalar_table();
  for (const KernelTable* t : tables) {
    for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 101, 1000}) {
      SCOPED_TRACE(n);
      const auto x = random_vec(n, rng);
      const auto y0 = random_vec(n, rng);
      const auto eta = random_vec(n, rng);

      auto y1 = y0, y2 = y0;
      ref.axpy(0.37, x.data(), y1.data(), n);
      t->axpy(0.37, x.data(), y2.data(), n);
      expect_close(y2, y1);

      const double d1 = ref.dot(x.data(), y0.data(), n);
      const double d2 = t->dot(x.data(), y0.data(), n);
      EXPECT_NEAR(d2, d1, 1e-12 * (1.0 + std::abs(d1)));

      const double s1 = ref.sum(x.data(), n);
      const double s2 = t->sum(x.data(), n);
      EXPECT_NEAR(s2, s1, 1e-12 * (1.0 + std::abs(s1)));

      std::vector<double> b1(n), b2(n);
      ref.blend(0.3, x.data(), eta.data(), y0.data(), b1.data(), n);
      t->blend(0.3, x.data(), eta.data(), y0.data(), b2.data(), n);
      expect_close(b2, b1);

      auto c1 = x, c2 = x;
      ref.scale(-1.7, c1.data(), n);
      t->scale(-1.7, c2.data(), n);
      expect_close(c2, c1);

      std::vector<unsigned> idx(n);
      std::uniform_int_distribution<unsigned> pick(0, static_cast<unsigned>(2 * n + 1));
      for (auto& i : idx) i = pick(rng);  // repeats allowed
      std::vector<double> a1(2 * n + 2, 0.5), a2(2 * n + 2, 0.5);
      ref.scatter_axpy(1.3, x.data(), idx.data(), a1.data(), n);
      t->scatter_axpy(1.3, x.data(), idx.data(), a2.data(), n);
      expect_close(a2, a1);
    }
  }
}

TEST(Kernels, ActiveTableIsStable) {
  const KernelTable* a = &active();
  const KernelTable* b = &active();
  EXPECT_EQ(a, b);
}
