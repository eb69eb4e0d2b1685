#pragma once

// Reader and writer for .sys system definitions.
//
//   group glplus dim 2
//   field L = inner [1,0;0,-1]
//   field Y = invariant [0,1;0,0]
//   field Z = zero
//   drift L + Y
//   control 1: Z + Y
//   controlset box -1 1
//
// Parsing never throws. Errors carry 1-based line/column spans and the parser
// resynchronizes at the next item keyword, so one pass reports all of them.

#include "affsys/systems.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace affsys {

struct SourceSpan {
  int line = 1;
  int column = 1;
  int length = 0;

  bool operator==(const SourceSpan&) const = default;
};

enum class ParseErrorKind { syntax, unknown_group, dimension_mismatch, not_in_algebra, duplicate_name, bad_number };

inline std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::syntax: return "syntax";
    case ParseErrorKind::unknown_group: return "unknown-group";
    case ParseErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ParseErrorKind::not_in_algebra: return "not-in-algebra";
    case ParseErrorKind::duplicate_name: return "duplicate-name";
    case ParseErrorKind::bad_number: return "bad-number";
  }
  return "?";
}

struct ParseError {
  SourceSpan span;
  ParseErrorKind kind = ParseErrorKind::syntax;
  std::string message;
};

inline std::string format_error(const ParseError& e) {
  return std::to_string(e.span.line) + ":" + std::to_string(e.span.column) + ": " + std::string(to_string(e.kind)) +
         ": " + e.message;
}

struct ParseResult {
  std::optional<AffineSystem> system;
  std::vector<ParseError> errors;

  bool ok() const { return system.has_value(); }
};

/// Thrown by parse_system_or_throw; carries the full error list.
class ParseFailure : public InvalidInput {
 public:
  explicit ParseFailure(std::vector<ParseError> errors)
      : InvalidInput(errors.empty() ? std::string("parse failed") : format_error(errors.front())),
        errors_(std::move(errors)) {}
  const std::vector<ParseError>& errors() const { return errors_; }

 private:
  std::vector<ParseError> errors_;
};

/// Largest matrix size the format accepts.
inline constexpr int kMaxDslDim = 16;

namespace dsl {

enum class Tok { ident, number, punct, end };

struct Token {
  Tok type = Tok::end;
  std::string_view text;
  SourceSpan span;
  double value = 0.0;
  bool number_ok = true;
};

inline bool is_keyword(std::string_view s) {
  static constexpr std::string_view kw[] = {"group", "dim", "field", "inner", "abelian", "invariant", "zero",
                                            "drift", "control", "controlset", "box"};
  return std::find(std::begin(kw), std::end(kw), s) != std::end(kw);
}

inline bool starts_item(const Token& t) {
  return t.type == Tok::ident &&
         (t.text == "group" || t.text == "field" || t.text == "drift" || t.text == "control" || t.text == "controlset");
}

class Lexer {
 public:
  Lexer(std::string_view text, std::vector<ParseError>& errors) : text_(text), errors_(errors) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (skip_blank(), pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        out.push_back(take(Tok::ident, [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; }));
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
                 ((c == '-' || c == '+') && pos_ + 1 < text_.size() &&
                  (std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) || text_[pos_ + 1] == '.'))) {
        out.push_back(number());
      } else if (std::string_view("=+:[];,").find(c) != std::string_view::npos) {
        out.push_back(take_n(Tok::punct, 1));
      } else {
        const Token bad = take_n(Tok::punct, 1);
        errors_.push_back({bad.span, ParseErrorKind::syntax, "unexpected character"});
      }
    }
    Token end;
    end.type = Tok::end;
    end.span = {line_, col_, 0};
    out.push_back(end);
    return out;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        return;
      }
    }
  }

  Token take_n(Tok type, std::size_t n) {
    Token t;
    t.type = type;
    t.span = {line_, col_, static_cast<int>(n)};
    t.text = text_.substr(pos_, n);
    for (std::size_t k = 0; k < n; ++k) advance();
    return t;
  }

  template <class Pred>
  Token take(Tok type, Pred pred) {
    std::size_t n = 1;
    while (pos_ + n < text_.size() && pred(text_[pos_ + n])) ++n;
    return take_n(type, n);
  }

  Token number() {
    std::size_t n = 1;
    while (pos_ + n < text_.size()) {
      const char c = text_[pos_ + n];
      const char prev = text_[pos_ + n - 1];
      const bool exp_sign = (c == '-' || c == '+') && (prev == 'e' || prev == 'E');
      if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == 'e' || c == 'E' || exp_sign)) break;
      ++n;
    }
    Token t = take_n(Tok::number, n);
    std::string_view s = t.text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, t.value);
    t.number_ok = res.ec == std::errc() && res.ptr == last && std::isfinite(t.value);
    if (!t.number_ok) errors_.push_back({t.span, ParseErrorKind::bad_number, "malformed number '" + std::string(t.text) + "'"});
    return t;
  }

  std::string_view text_;
  std::vector<ParseError>& errors_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct Syntax {};  // unwinds to the next item keyword

struct MatrixLit {
  Matrix value;
  SourceSpan span;
  bool ok = true;
};

enum class FieldKind { inner, abelian, invariant, zero };

struct FieldDecl {
  FieldKind kind;
  MatrixLit matrix;
  SourceSpan name_span;
};

struct PairRef {
  Token linear;
  Token invariant;
  SourceSpan where;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::vector<ParseError>& errors) : toks_(std::move(tokens)), errors_(errors) {}

  std::optional<AffineSystem> run() {
    parse_group();
    while (peek().type != Tok::end) {
      try {
        parse_item();
      } catch (const Syntax&) {
        synchronize();
      }
    }
    return build();
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (t.type != Tok::end) ++pos_;
    return t;
  }

  [[noreturn]] void fail(const Token& at, std::string message, ParseErrorKind kind = ParseErrorKind::syntax) {
    errors_.push_back({at.span, kind, std::move(message)});
    throw Syntax{};
  }

  void synchronize() {
    if (!starts_item(peek()) && peek().type != Tok::end) next();
    while (peek().type != Tok::end && !starts_item(peek())) next();
  }

  const Token& expect_word(std::string_view word) {
    if (peek().type != Tok::ident || peek().text != word) fail(peek(), "expected '" + std::string(word) + "'");
    return next();
  }

  const Token& expect_punct(char c) {
    if (peek().type != Tok::punct || peek().text != std::string_view(&c, 1))
      fail(peek(), std::string("expected '") + c + "'");
    return next();
  }

  const Token& expect_name() {
    if (peek().type != Tok::ident) fail(peek(), "expected a name");
    if (is_keyword(peek().text)) fail(peek(), "'" + std::string(peek().text) + "' is reserved");
    return next();
  }

  const Token& expect_number() {
    if (peek().type != Tok::number) fail(peek(), "expected a number");
    return next();
  }

  std::optional<long> integer_value(const Token& t) {
    if (!t.number_ok) return std::nullopt;
    if (t.value != std::floor(t.value) || t.text.find_first_of(".eE") != std::string_view::npos) {
      errors_.push_back({t.span, ParseErrorKind::bad_number, "expected an integer"});
      return std::nullopt;
    }
    if (std::abs(t.value) > 1e9) {
      errors_.push_back({t.span, ParseErrorKind::bad_number, "integer out of range"});
      return std::nullopt;
    }
    return static_cast<long>(t.value);
  }

  void parse_group() {
    try {
      const Token& kw = peek();
      if (kw.type != Tok::ident || kw.text != "group") fail(kw, "file must start with 'group KIND dim N'");
      next();
      if (peek().type != Tok::ident) fail(peek(), "expected a group kind");
      const Token& kind_tok = next();
      std::optional<GroupKind> kind;
      for (auto k : {GroupKind::GLplus, GroupKind::SL, GroupKind::SO, GroupKind::Heisenberg3, GroupKind::AbelianRn})
        if (to_string(k) == kind_tok.text) kind = k;
      if (!kind)
        errors_.push_back({kind_tok.span, ParseErrorKind::unknown_group,
                           "unknown group '" + std::string(kind_tok.text) + "' (glplus, sl, so, heis3, rn)"});
      expect_word("dim");
      const Token& dim_tok = expect_number();
      const auto n = integer_value(dim_tok);
      if (!kind || !n) return;
      if (*n < 1 || *n > kMaxDslDim) {
        errors_.push_back({dim_tok.span, ParseErrorKind::dimension_mismatch,
                           "dimension must be between 1 and " + std::to_string(kMaxDslDim)});
        return;
      }
      if (*kind == GroupKind::Heisenberg3 && *n != 3) {
        errors_.push_back({dim_tok.span, ParseErrorKind::dimension_mismatch, "heis3 has dimension 3"});
        return;
      }
      group_ = GroupSpec::make(*kind, static_cast<int>(*n));
    } catch (const Syntax&) {
      synchronize();
    }
  }

  void parse_item() {
    const Token& kw = peek();
    if (kw.type == Tok::ident && kw.text == "field") return parse_field();
    if (kw.type == Tok::ident && kw.text == "drift") return parse_drift();
    if (kw.type == Tok::ident && kw.text == "control") return parse_control();
    if (kw.type == Tok::ident && kw.text == "controlset") return parse_box();
    if (kw.type == Tok::ident && kw.text == "group") fail(next(), "duplicate group declaration");
    fail(kw, "expected field, drift, control or controlset");
  }

  MatrixLit parse_matrix() {
    MatrixLit lit;
    const Token& open = expect_punct('[');
    lit.span = open.span;
    std::vector<std::vector<double>> rows;
    std::optional<std::size_t> width;
    for (;;) {
      std::vector<double> row;
      const SourceSpan row_start = peek().span;
      for (;;) {
        const Token& num = expect_number();
        if (!num.number_ok) lit.ok = false;
        row.push_back(num.value);
        if (peek().type == Tok::punct && peek().text == ",") {
          next();
          continue;
        }
        break;
      }
      if (width && *width != row.size()) {
        errors_.push_back({row_start, ParseErrorKind::dimension_mismatch,
                           "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(*width)});
        lit.ok = false;
      }
      if (!width) width = row.size();
      rows.push_back(std::move(row));
      if (peek().type == Tok::punct && peek().text == ";") {
        next();
        continue;
      }
      break;
    }
    const Token& close = expect_punct(']');
    lit.span.length = close.span.line == lit.span.line ? close.span.column + 1 - lit.span.column : 1;
    if (lit.ok) {
      lit.value.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(*width));
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < *width; ++j)
          lit.value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return lit;
  }

  void parse_field() {
    next();
    const Token& name = expect_name();
    expect_punct('=');
    if (peek().type != Tok::ident) fail(peek(), "expected inner, abelian, invariant or zero");
    const Token& kind_tok = next();
    FieldDecl decl{FieldKind::zero, {}, name.span};
    if (kind_tok.text == "inner") {
      decl.kind = FieldKind::inner;
    } else if (kind_tok.text == "abelian") {
      decl.kind = FieldKind::abelian;
    } else if (kind_tok.text == "invariant") {
      decl.kind = FieldKind::invariant;
    } else if (kind_tok.text != "zero") {
      fail(kind_tok, "expected inner, abelian, invariant or zero");
    }
    if (decl.kind != FieldKind::zero) {
      decl.matrix = parse_matrix();
      if (decl.matrix.ok) decl.matrix.ok = check_field(decl);
    }
    if (fields_.count(std::string(name.text))) {
      errors_.push_back({name.span, ParseErrorKind::duplicate_name, "field '" + std::string(name.text) + "' is already defined"});
      return;
    }
    fields_.emplace(std::string(name.text), std::move(decl));
  }

  bool check_field(FieldDecl& decl) {
    if (!group_) return true;
    const std::size_t before = errors_.size();
    const GroupSpec& g = *group_;
    Matrix& m = decl.matrix.value;
    const SourceSpan at = decl.matrix.span;
    const Eigen::Index n = g.n();
    auto shape = [&](Eigen::Index r, Eigen::Index c) {
      return std::to_string(r) + "x" + std::to_string(c);
    };
    switch (decl.kind) {
      case FieldKind::inner:
        if (g.abelian_rn()) {
          errors_.push_back({at, ParseErrorKind::not_in_algebra, "inner fields are not defined on rn; use abelian"});
        } else if (m.rows() != n || m.cols() != n) {
          errors_.push_back({at, ParseErrorKind::dimension_mismatch, "expected " + shape(n, n) + ", got " + shape(m.rows(), m.cols())});
        } else if (!g.in_algebra(m)) {
          errors_.push_back({at, ParseErrorKind::not_in_algebra, "inner generator is not in the algebra of " + g.name()});
        }
        break;
      case FieldKind::abelian:
        if (!g.abelian_rn()) {
          errors_.push_back({at, ParseErrorKind::not_in_algebra, "abelian maps are only defined on rn"});
        } else if (m.rows() != n || m.cols() != n) {
          errors_.push_back({at, ParseErrorKind::dimension_mismatch, "expected " + shape(n, n) + ", got " + shape(m.rows(), m.cols())});
        }
        break;
      case FieldKind::invariant:
        if (g.abelian_rn() && m.rows() == 1 && m.cols() == n && n > 1) m.transposeInPlace();
        if (!g.has_shape(m)) {
          errors_.push_back({at, ParseErrorKind::dimension_mismatch,
                             "expected " + shape(g.elem_rows(), g.elem_cols()) + ", got " + shape(m.rows(), m.cols())});
        } else if (!g.in_algebra(m)) {
          errors_.push_back({at, ParseErrorKind::not_in_algebra, "invariant generator is not in the algebra of " + g.name()});
        }
        break;
      case FieldKind::zero:
        break;
    }
    return errors_.size() == before;
  }

  PairRef parse_pair(SourceSpan where) {
    PairRef ref;
    ref.where = where;
    ref.linear = expect_name();
    expect_punct('+');
    ref.invariant = expect_name();
    return ref;
  }

  void parse_drift() {
    const Token& kw = next();
    PairRef ref = parse_pair(kw.span);
    if (drift_) {
      errors_.push_back({kw.span, ParseErrorKind::duplicate_name, "drift is already defined"});
      return;
    }
    drift_ = ref;
  }

  void parse_control() {
    next();
    const Token& idx_tok = expect_number();
    expect_punct(':');
    PairRef ref = parse_pair(idx_tok.span);
    const auto idx = integer_value(idx_tok);
    if (!idx) return;
    if (*idx < 1) {
      errors_.push_back({idx_tok.span, ParseErrorKind::syntax, "control indices start at 1"});
      return;
    }
    if (controls_.count(*idx)) {
      errors_.push_back({idx_tok.span, ParseErrorKind::duplicate_name, "control " + std::to_string(*idx) + " is already defined"});
      return;
    }
    controls_.emplace(*idx, ref);
  }

  void parse_box() {
    const Token& kw = next();
    expect_word("box");
    const Token& lo = expect_number();
    const Token& hi = expect_number();
    if (!lo.number_ok || !hi.number_ok) return;
    if (!(lo.value <= hi.value)) {
      errors_.push_back({lo.span, ParseErrorKind::syntax, "box lower bound exceeds upper bound"});
      return;
    }
    if (box_) {
      errors_.push_back({kw.span, ParseErrorKind::duplicate_name, "controlset is already defined"});
      return;
    }
    box_ = ControlBox{lo.value, hi.value};
  }

  const FieldDecl* lookup(const Token& name) {
    const auto it = fields_.find(std::string(name.text));
    if (it == fields_.end()) {
      errors_.push_back({name.span, ParseErrorKind::syntax, "undefined field '" + std::string(name.text) + "'"});
      return nullptr;
    }
    return &it->second;
  }

  std::optional<ControlPair> resolve(const PairRef& ref) {
    const FieldDecl* lin = lookup(ref.linear);
    const FieldDecl* inv = lookup(ref.invariant);
    if (!lin || !inv) return std::nullopt;
    bool ok = true;
    if (lin->kind == FieldKind::invariant) {
      errors_.push_back({ref.linear.span, ParseErrorKind::syntax, "'" + std::string(ref.linear.text) + "' is not a linear field"});
      ok = false;
    }
    if (inv->kind == FieldKind::inner || inv->kind == FieldKind::abelian) {
      errors_.push_back({ref.invariant.span, ParseErrorKind::syntax,
                         "'" + std::string(ref.invariant.text) + "' is not an invariant field"});
      ok = false;
    }
    if (!ok || !group_ || !lin_ok(*lin) || !lin_ok(*inv)) return std::nullopt;
    const GroupSpec& g = *group_;
    LinearField linear = lin->kind == FieldKind::zero       ? LinearField::zero(group_)
                         : lin->kind == FieldKind::inner    ? LinearField::inner(group_, lin->matrix.value)
                                                            : LinearField::abelian_map(group_, lin->matrix.value);
    Matrix invariant = inv->kind == FieldKind::zero ? Matrix(Matrix::Zero(g.elem_rows(), g.elem_cols())) : inv->matrix.value;
    return ControlPair{std::move(linear), std::move(invariant)};
  }

  // A declared field whose matrix failed a check has already been reported.
  bool lin_ok(const FieldDecl& d) const { return d.kind == FieldKind::zero || d.matrix.ok; }

  std::optional<AffineSystem> build() {
    if (!drift_) {
      errors_.push_back({toks_.back().span, ParseErrorKind::syntax, "missing drift line"});
    }
    long expected = 1;
    for (const auto& [idx, ref] : controls_) {
      if (idx != expected) {
        errors_.push_back({ref.where, ParseErrorKind::syntax,
                           "control " + std::to_string(idx) + " follows control " + std::to_string(expected - 1) +
                               "; indices must be 1..m without gaps"});
        break;
      }
      ++expected;
    }
    std::optional<ControlPair> drift = drift_ ? resolve(*drift_) : std::nullopt;
    std::vector<ControlPair> pairs;
    for (const auto& [idx, ref] : controls_) {
      if (auto p = resolve(ref)) pairs.push_back(std::move(*p));
    }
    if (!errors_.empty() || !drift || !group_) return std::nullopt;
    try {
      return AffineSystem(group_, std::move(drift->linear), std::move(drift->invariant), std::move(pairs), box_);
    } catch (const Error& e) {
      errors_.push_back({drift_->where, ParseErrorKind::not_in_algebra, e.what()});
      return std::nullopt;
    }
  }

  std::vector<Token> toks_;
  std::vector<ParseError>& errors_;
  std::size_t pos_ = 0;
  GroupRef group_;
  std::map<std::string, FieldDecl> fields_;
  std::optional<PairRef> drift_;
  std::map<long, PairRef> controls_;
  std::optional<ControlBox> box_;
};

inline std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string matrix_literal(const Matrix& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i > 0) out += ";";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ",";
      out += number(m(i, j));
    }
  }
  return out + "]";
}

}  // namespace dsl

inline ParseResult parse_system(std::string_view text) {
  ParseResult result;
  try {
    dsl::Lexer lexer(text, result.errors);
    dsl::Parser parser(lexer.run(), result.errors);
    auto system = parser.run();
    if (result.errors.empty()) result.system = std::move(system);
  } catch (const std::exception& e) {
    result.errors.push_back({{1, 1, 0}, ParseErrorKind::syntax, std::string("internal error: ") + e.what()});
  }
  return result;
}

inline AffineSystem parse_system_or_throw(std::string_view text) {
  auto r = parse_system(text);
  if (!r.ok()) throw ParseFailure(std::move(r.errors));
  return std::move(*r.system);
}

/// Inverse of parse_system up to names, layout and comments.
inline std::string serialize(const AffineSystem& system) {
  const GroupSpec& g = *system.group();
  std::string out = "group " + std::string(to_string(g.kind())) + " dim " + std::to_string(g.n()) + "\n";
  auto emit = [&](const ControlPair& pair, const std::string& suffix) {
    const LinearField& lin = pair.linear;
    out += "field L" + suffix + " = ";
    if (lin.is_zero())
      out += "zero\n";
    else
      out += std::string(lin.kind() == LinearField::Kind::Inner ? "inner " : "abelian ") + dsl::matrix_literal(lin.generator()) + "\n";
    out += "field Y" + suffix + " = ";
    if (pair.invariant.isZero(0.0))
      out += "zero\n";
    else
      out += "invariant " + dsl::matrix_literal(pair.invariant) + "\n";
  };
  emit({system.drift_linear(), system.drift_invariant()}, "0");
  for (std::size_t j = 0; j < system.m(); ++j) emit(system.controlled()[j], std::to_string(j + 1));
  out += "drift L0 + Y0\n";
  for (std::size_t j = 0; j < system.m(); ++j) {
    const std::string s = std::to_string(j + 1);
    out += "control " + s + ": L" + s + " + Y" + s + "\n";
  }
  if (system.control_set())
    out += "controlset box " + dsl::number(system.control_set()->lo) + " " + dsl::number(system.control_set()->hi) + "\n";
  return out;
}

}  // namespace affsys
