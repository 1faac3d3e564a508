#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "no2/data.hpp"
#include "no2/fit.hpp"

namespace test {

/// Self-cleaning scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("no2_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Grouped design assembled directly from raw rows; locations laid out on a
/// line so spatial code can consume it too.
inline no2::fit::GroupedDesign make_design(
    const std::vector<std::string>& site_of_row, const std::vector<double>& y,
    const std::vector<double>& x,
    const std::vector<std::vector<double>>& w = {}) {
  no2::fit::GroupedDesign d;
  d.traffic_dim = w.empty() ? 0 : w.front().size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < y.size(); ++i) {
    no2::fit::DesignRow row;
    row.site_id = site_of_row[i];
    row.y = y[i];
    row.x = x[i];
    if (!w.empty()) row.w = w[i];
    auto [it, fresh] = index.emplace(row.site_id, d.site_ids.size());
    if (fresh) {
      d.site_ids.push_back(row.site_id);
      d.site_locations.push_back(
          {1000.0 * static_cast<double>(d.site_ids.size()), 0.0});
      d.group_rows.emplace_back();
    }
    d.group_rows[it->second].push_back(d.rows.size());
    d.rows.push_back(std::move(row));
  }
  return d;
}

/// Independent ordinary least squares via normal equations and Gauss-Jordan
/// inversion. No shared code with the library path (which uses a pivoted QR).
struct OlsOracle {
  std::vector<double> coef;
  std::vector<double> se;
  double sigma2 = 0;
  double r2 = 0;
  double adjusted_r2 = 0;
};

inline OlsOracle ols_oracle(const std::vector<std::vector<double>>& X,
                            const std::vector<double>& y) {
  const std::size_t n = X.size();
  const std::size_t p = X.front().size();
  // A = X'X, b = X'y
  std::vector<std::vector<double>> A(p, std::vector<double>(p, 0.0));
  std::vector<double> b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      b[j] += X[i][j] * y[i];
      for (std::size_t k = 0; k < p; ++k) A[j][k] += X[i][j] * X[i][k];
    }
  }
  // Gauss-Jordan inverse with partial pivoting.
  std::vector<std::vector<double>> inv(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    std::swap(A[col], A[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = A[col][col];
    for (std::size_t c = 0; c < p; ++c) {
      A[col][c] /= d;
      inv[col][c] /= d;
    }
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = A[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < p; ++c) {
        A[r][c] -= f * A[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  OlsOracle o;
  o.coef.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < p; ++k) o.coef[j] += inv[j][k] * b[k];
  double rss = 0, mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double tss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0;
    for (std::size_t j = 0; j < p; ++j) fit += X[i][j] * o.coef[j];
    rss += (y[i] - fit) * (y[i] - fit);
    tss += (y[i] - mean) * (y[i] - mean);
  }
  const double dof = static_cast<double>(n - p);
  o.sigma2 = rss / dof;
  o.se.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) o.se[j] = std::sqrt(o.sigma2 * inv[j][j]);
  o.r2 = tss > 0 ? 1.0 - rss / tss : 1.0;
  o.adjusted_r2 =
      1.0 - (1.0 - o.r2) * static_cast<double>(n - 1) / dof;
  return o;
}

}  // namespace test
