#pragma once

#include <span>
#include <string>
#include <utility>

namespace twohop {

struct Rgb {
  int r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Hsl {
  double h = 0.0;  // degrees in [0, 360)
  double s = 0.0;  // [0, 1]
  double l = 0.0;  // [0, 1]
};

Hsl rgb_to_hsl(const Rgb& c);
Rgb hsl_to_rgb(const Hsl& c);  // channels rounded half-up into [0, 255]

// RGB -> HSL -> +degrees mod 360 -> RGB
Rgb rotate_hue(const Rgb& c, double degrees);

// Nearest CSS3 extended color keyword by Euclidean distance in RGB,
// ties broken alphabetically.
std::string nearest_css3_name(const Rgb& c);

// The CSS3 extended color keyword table, sorted by name.
std::span<const std::pair<const char*, Rgb>> css3_colors();

std::string format_rgb(const Rgb& c);  // "(r, g, b)"

}  // namespace twohop
