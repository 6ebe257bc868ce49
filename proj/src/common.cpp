#include "rlab/common.hpp"

#include <cstdio>
#include <cstdlib>

namespace rlab {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string gshort(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  if (s.empty()) throw data_error("empty value for " + what);
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (end == begin || *end != '\0')
    throw data_error("unparseable value '" + s + "' for " + what);
  return v;
}

long long parse_int(const std::string& s, const std::string& what) {
  if (s.empty()) throw data_error("empty value for " + what);
  const char* begin = s.c_str();
  char* end = nullptr;
  long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw data_error("unparseable integer '" + s + "' for " + what);
  return v;
}

}  // namespace rlab
