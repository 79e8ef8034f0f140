#include "segp/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace segp {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::hexfloat << spare_;
  return out.str();
}

Rng Rng::deserialize(const std::string& text) {
  std::istringstream in(text);
  Rng rng;
  int spare_flag = 0;
  std::string spare_text;
  in >> rng.engine_ >> spare_flag >> spare_text;
  if (!in) throw std::invalid_argument("Rng::deserialize: malformed state");
  rng.has_spare_ = spare_flag != 0;
  // operator>> for hexfloat is unreliable across standard libraries
  rng.spare_ = std::strtod(spare_text.c_str(), nullptr);
  return rng;
}

}  // namespace segp
