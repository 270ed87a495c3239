#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tabseq::csv {

/// RFC-4180 reader: comma separated, double-quote quoting with "" escapes,
/// CRLF or LF line endings. Quoted fields may span lines.
class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  /// Reads the next row; returns false at end of input.
  bool next(std::vector<std::string>& row);
  /// 1-based line number where the last returned row started.
  [[nodiscard]] std::size_t line() const noexcept { return row_line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t current_line_ = 1;
  std::size_t row_line_ = 0;
};

/// Quotes a field only when it contains a comma, quote, or line break.
std::string escape(std::string_view field);

}  // namespace tabseq::csv
