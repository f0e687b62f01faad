#pragma once

// Line cursor shared by the fact, example and rule parsers.

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "rdgcn/error.hpp"
#include "rdgcn/kb.hpp"

namespace rdgcn::kb::detail {

enum class TermMode {
  Ground,  // bare and quoted names are constants
  Rule,    // bare names are variables, quoted names are constants
};

struct ParsedTerm {
  Term term;
  std::optional<std::string> type_annotation;  // `name:type`, ground mode only
  std::size_t column = 0;
};

struct ParsedAtom {
  Atom atom;
  std::vector<ParsedTerm> terms;
  std::size_t column = 0;
};

class Cursor {
 public:
  Cursor(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {}

  /// Skips whitespace. A `%` outside quotes ends the line.
  void skip_ws() {
    while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_]))) ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= line_.size() || line_[pos_] == '%';
  }

  /// Text after the `%` comment marker, or empty.
  std::string_view comment() {
    skip_ws();
    if (pos_ < line_.size() && line_[pos_] == '%') return line_.substr(pos_ + 1);
    return {};
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < line_.size() && line_[pos_] == c;
  }

  bool consume(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }

  bool consume(std::string_view token) {
    skip_ws();
    if (line_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < line_.size() && is_ident_char(line_[pos_])) ++pos_;
    if (pos_ == start) fail("expected identifier");
    return std::string(line_.substr(start, pos_ - start));
  }

  std::string quoted() {
    skip_ws();
    if (pos_ >= line_.size() || line_[pos_] != '"') fail("expected '\"'");
    ++pos_;
    std::string out;
    while (pos_ < line_.size() && line_[pos_] != '"') {
      if (line_[pos_] == '\\' && pos_ + 1 < line_.size()) ++pos_;
      out.push_back(line_[pos_++]);
    }
    if (pos_ >= line_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  ParsedTerm term(TermMode mode) {
    skip_ws();
    ParsedTerm t;
    t.column = column();
    if (peek('"')) {
      t.term = Term::constant(quoted());
    } else {
      std::string name = identifier();
      t.term = mode == TermMode::Rule ? Term::variable(std::move(name))
                                      : Term::constant(std::move(name));
    }
    if (mode == TermMode::Ground && consume(':')) t.type_annotation = identifier();
    return t;
  }

  /// `Name(term, ...)`
  ParsedAtom atom(TermMode mode) {
    skip_ws();
    ParsedAtom out;
    out.column = column();
    out.atom.predicate = identifier();
    expect('(');
    if (!peek(')')) {
      do {
        ParsedTerm t = term(mode);
        out.atom.args.push_back(t.term);
        out.terms.push_back(std::move(t));
      } while (consume(','));
    }
    expect(')');
    return out;
  }

  [[noreturn]] void fail(const std::string& what) { throw ParseError(what, line_no_, column()); }

  std::size_t column() const { return pos_ + 1; }
  std::size_t line_no() const { return line_no_; }

  static bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

 private:
  std::string_view line_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

/// Calls `fn(line, line_no)` for each line of `text` (1-based numbering).
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, line_no);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

}  // namespace rdgcn::kb::detail
