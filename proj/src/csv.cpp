#include "tabseq/csv.hpp"

#include "tabseq/errors.hpp"

namespace tabseq::csv {

bool Reader::next(std::vector<std::string>& row) {
  row.clear();
  if (pos_ >= text_.size()) return false;
  row_line_ = current_line_;

  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  while (pos_ < text_.size()) {
    const char c = text_[pos_];
    if (in_quotes) {
      if (c == '"') {
        if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '"') {
          field.push_back('"');
          pos_ += 2;
          continue;
        }
        in_quotes = false;
        ++pos_;
        continue;
      }
      if (c == '\n') ++current_line_;
      field.push_back(c);
      ++pos_;
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_was_quoted) {
        throw ParseError("line " + std::to_string(current_line_) + ": stray quote inside unquoted field");
      }
      in_quotes = true;
      field_was_quoted = true;
      ++pos_;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
      ++pos_;
    } else if (c == '\r' || c == '\n') {
      pos_ += (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') ? 2 : 1;
      ++current_line_;
      row.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
      ++pos_;
    }
  }
  if (in_quotes) throw ParseError("line " + std::to_string(row_line_) + ": unterminated quoted field");
  row.push_back(std::move(field));
  return true;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace tabseq::csv
