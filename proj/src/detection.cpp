#include "qens/detection.hpp"

namespace qens {

std::size_t DetectionSetGroup::total() const {
  std::size_t n = 0;
  for (const auto& s : sets) n += s.size();
  return n;
}

std::vector<Detection> DetectionSetGroup::pooled() const {
  std::vector<Detection> out;
  out.reserve(total());
  for (const auto& s : sets) out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace qens
