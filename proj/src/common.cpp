#include "twohop/common.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace twohop {

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), "quantile: empty input");
  require(q >= 0.0 && q <= 1.0, "quantile: q out of [0,1]");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  double idx = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(idx);
  if (lo >= values.size() - 1) return values.back();
  double frac = idx - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

Iqr interquartile(std::vector<double> values) {
  Iqr out;
  out.q1 = quantile(values, 0.25);
  out.q3 = quantile(values, 0.75);
  return out;
}

double mean(std::span<const double> values) {
  require(!values.empty(), "mean: empty input");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

PearsonResult pearson(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "pearson: size mismatch");
  require(a.size() >= 2, "pearson: need at least 2 points");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  PearsonResult res;
  if (saa <= 0.0 || sbb <= 0.0) return res;  // zero variance: undefined
  res.r = sab / std::sqrt(saa * sbb);
  res.r2 = res.r * res.r;
  res.defined = true;
  return res;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write file: " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  require(out.good(), "write failed: " + path);
}

std::string hex_u64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

bool starts_with_digit(std::string_view s) {
  return !s.empty() && s.front() >= '0' && s.front() <= '9';
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace twohop
