#include "twohop/numwords.hpp"

#include "twohop/common.hpp"

namespace twohop {

namespace {

const char* kOnes[] = {"zero", "one", "two",   "three", "four",
                       "five", "six", "seven", "eight", "nine",
                       "ten",  "eleven", "twelve", "thirteen", "fourteen",
                       "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
const char* kTens[] = {"", "", "twenty", "thirty", "forty",
                       "fifty", "sixty", "seventy", "eighty", "ninety"};

std::string below_hundred(int n) {
  if (n < 20) return kOnes[n];
  std::string out = kTens[n / 10];
  if (n % 10 != 0) {
    out += "-";
    out += kOnes[n % 10];
  }
  return out;
}

}  // namespace

std::string spell_cardinal(int n) {
  require(n >= 0 && n <= 999, "spell_cardinal: out of range 0..999");
  if (n < 100) return below_hundred(n);
  std::string out = std::string(kOnes[n / 100]) + " hundred";
  if (n % 100 != 0) out += " and " + below_hundred(n % 100);
  return out;
}

std::vector<std::pair<std::string, std::string>> number_word_pairs(int lo, int hi) {
  require(lo >= 0 && lo <= hi && hi <= 999, "number_word_pairs: bad range");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int i = lo; i <= hi; ++i) out.emplace_back(std::to_string(i), spell_cardinal(i));
  return out;
}

}  // namespace twohop
