#ifndef FEDBOOK_TEXT_FORMAT_H_
#define FEDBOOK_TEXT_FORMAT_H_

#include <charconv>
#include <string>

namespace fedbook {

// Shortest decimal text that parses back to exactly `v`.
inline std::string FormatDouble(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace fedbook

#endif  // FEDBOOK_TEXT_FORMAT_H_
