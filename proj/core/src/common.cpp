#include "sddp/common.hpp"

#include <cmath>

namespace sddp {

namespace {

std::uint64_t splitmix_once(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  std::uint64_t h = splitmix_once(master ^ fnv1a(tag));
  h = splitmix_once(h ^ (index * 0x9e3779b97f4a7c15ULL + 1));
  return splitmix_once(h);
}

}  // namespace sddp
