#pragma once

// Mutation fuzzing helpers for the .sys reader.

#include "affsys/sysdsl.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace affsys::testing {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> sample_files() {
  return {"example.sys",   "gl2_diagonal.sys",     "gl2_linear.sys",  "gl2_traced.sys",      "det_target.sys",
          "det_traced.sys", "gl4_block_diagonal.sys", "gl6_so3_blocks.sys", "so3_invariant.sys", "sl2_noncommuting.sys",
          "heis3.sys",      "r2_bilinear.sys",      "r2_affine.sys",   "zero_gl3.sys"};
}

inline std::string sample_path(const std::string& name) { return std::string(AFFSYS_SAMPLES_DIR) + "/" + name; }

/// Line and column bounds of the text; an end-of-input span may sit one
/// past the last character of its line.
inline bool span_in_bounds(std::string_view text, const SourceSpan& span) {
  std::vector<std::size_t> lengths{0};
  for (char c : text) {
    if (c == '\n')
      lengths.push_back(0);
    else
      ++lengths.back();
  }
  if (span.line < 1 || span.column < 1 || span.length < 0) return false;
  if (static_cast<std::size_t>(span.line) > lengths.size()) return false;
  const std::size_t len = lengths[static_cast<std::size_t>(span.line - 1)];
  return static_cast<std::size_t>(span.column - 1 + span.length) <= len;
}

/// One random edit: byte edits, line edits, or token-shaped insertions.
inline std::string mutate(const std::string& src, std::mt19937_64& rng) {
  static const std::vector<std::string> snippets{
      "group", "field", "drift", "control", "controlset", "box", "inner", "abelian", "invariant", "zero", "dim",
      "[", "]", ";", ",", "+", "=", ":", "#", "\n", " ", "-", ".", "e", "1e999", "nan", "inf", "0x1p3", "1.2.3",
      "-0", "1e-400", "so", "rn", "heis3", "sl", "glplus", "99", "\xff", "\t", "∑", "\r\n", "0", "1", "-1"};
  std::string s = src;
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n)(rng); };
  const int op = static_cast<int>(pick(8));
  switch (op) {
    case 0:
      if (!s.empty()) s.erase(pick(s.size() - 1), 1 + pick(3));
      break;
    case 1:
      s.insert(pick(s.size()), 1, static_cast<char>(pick(255)));
      break;
    case 2:
      if (!s.empty()) s[pick(s.size() - 1)] = static_cast<char>(pick(127));
      break;
    case 3:
      s.insert(pick(s.size()), snippets[pick(snippets.size() - 1)]);
      break;
    case 4:
      s.resize(pick(s.size()));
      break;
    default: {
      std::vector<std::string> lines;
      std::stringstream ss(s);
      for (std::string line; std::getline(ss, line);) lines.push_back(line);
      if (lines.empty()) break;
      const std::size_t a = pick(lines.size() - 1), b = pick(lines.size() - 1);
      if (op == 5) std::swap(lines[a], lines[b]);
      if (op == 6) lines.insert(lines.begin() + static_cast<long>(a), lines[b]);
      if (op == 7) lines.erase(lines.begin() + static_cast<long>(a));
      if (op == 8 && !lines[a].empty()) lines[a].erase(pick(lines[a].size() - 1));
      s.clear();
      for (const auto& line : lines) s += line + "\n";
      break;
    }
  }
  return s;
}

struct FuzzOutcome {
  int cases = 0;
  int accepted = 0;
  int crashes = 0;
  int bad_errors = 0;
  int empty_failures = 0;
  int round_trip_failures = 0;
};

/// Mutates every sample `per_file` times, stacking 1 to 4 edits per case.
inline FuzzOutcome fuzz_samples(int per_file, std::uint64_t seed) {
  FuzzOutcome out;
  std::mt19937_64 rng(seed);
  for (const auto& name : sample_files()) {
    const std::string base = read_file(sample_path(name));
    for (int k = 0; k < per_file; ++k) {
      std::string text = base;
      const int edits = 1 + static_cast<int>(rng() % 4);
      for (int e = 0; e < edits; ++e) text = mutate(text, rng);
      ++out.cases;
      try {
        const ParseResult r = parse_system(text);
        if (r.ok()) {
          ++out.accepted;
          const ParseResult again = parse_system(serialize(*r.system));
          if (!again.ok() || !(*again.system == *r.system)) ++out.round_trip_failures;
          continue;
        }
        if (r.errors.empty()) ++out.empty_failures;
        for (const auto& err : r.errors)
          if (!span_in_bounds(text, err.span) || err.message.empty() ||
              err.message.find("internal error") != std::string::npos)
            ++out.bad_errors;
      } catch (...) {
        ++out.crashes;
      }
    }
  }
  return out;
}

}  // namespace affsys::testing
