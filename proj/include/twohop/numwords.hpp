#pragma once

#include <string>
#include <utility>
#include <vector>

namespace twohop {

// English cardinal spelling for 0..999 ("three hundred and forty-five").
std::string spell_cardinal(int n);

// (number string, spelled form) pairs for [lo, hi], usable as a pair file.
std::vector<std::pair<std::string, std::string>> number_word_pairs(int lo, int hi);

}  // namespace twohop
