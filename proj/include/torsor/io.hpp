#pragma once

// Line-oriented text formats (torsor-graph, torsor-features, torsor-states,
// torsor-kernel) and the rep spec grammar. Writers are canonical: loading a
// canonical file and saving it again is byte-identical. Numbers use 17
// significant digits so payloads round-trip exactly.

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "torsor/conv.hpp"
#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/potential_graph.hpp"
#include "torsor/sheaf.hpp"

namespace torsor {

inline std::string format_double(double x, int precision = 17) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, precision);
  return std::string(buf, res.ptr);
}

namespace io_detail {

struct Token {
  std::string_view text;
  int col;  // 1-based
};

// Strips the comment tail and splits on blanks.
inline std::vector<Token> tokenize(std::string_view line) {
  const std::size_t hash = line.find('#');
  if (hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.push_back(Token{line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

[[noreturn]] inline void fail(int line, int col, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg);
}

inline double parse_double(const Token& t, int line) {
  double v = 0.0;
  const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size())
    fail(line, t.col, "expected a number, got '" + std::string(t.text) + "'");
  return v;
}

inline long long parse_int(const Token& t, int line) {
  long long v = 0;
  const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.text.data() + t.text.size())
    fail(line, t.col, "expected an integer, got '" + std::string(t.text) + "'");
  return v;
}

// Non-blank lines with their 1-based numbers, comments removed.
inline std::vector<std::pair<int, std::vector<Token>>> content_lines(std::string_view text) {
  std::vector<std::pair<int, std::vector<Token>>> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    ++line_no;
    auto toks = tokenize(line);
    if (!toks.empty()) out.emplace_back(line_no, std::move(toks));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

inline void expect_header(const std::pair<int, std::vector<Token>>& line, const char* a,
                          const char* b) {
  const auto& [no, toks] = line;
  if (toks.size() != 2 || toks[0].text != a || toks[1].text != b)
    fail(no, toks.empty() ? 1 : toks[0].col,
         std::string("expected header '") + a + " " + b + "'");
}

// Reads the fixed payload token count for the kind, advancing `next`.
inline GroupElement parse_payload(const GroupKind& kind, const std::vector<Token>& toks,
                                  std::size_t& next, int line) {
  const auto need = [&](std::size_t k) {
    if (next + k > toks.size())
      fail(line, toks.empty() ? 1 : toks.back().col, "truncated group element payload");
  };
  switch (kind.tag()) {
    case GroupTag::Cyclic: {
      need(1);
      return GroupElement::cyclic(kind, parse_int(toks[next++], line));
    }
    case GroupTag::SO2: {
      need(1);
      return GroupElement::angle(parse_double(toks[next++], line));
    }
    case GroupTag::SO3: {
      need(9);
      Eigen::Matrix3d m;
      const int first_col = toks[next].col;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = parse_double(toks[next++], line);
      try {
        return GroupElement::rotation3(m);
      } catch (const InvalidElement& e) {
        fail(line, first_col, e.what());
      }
    }
  }
  throw Unsupported("unknown group kind");
}

inline std::string encode_payload(const GroupElement& g) {
  switch (g.kind().tag()) {
    case GroupTag::Cyclic:
      return std::to_string(g.residue());
    case GroupTag::SO2:
      return format_double(g.theta());
    case GroupTag::SO3: {
      std::string s;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          if (!s.empty()) s += ' ';
          s += format_double(g.matrix()(r, c));
        }
      return s;
    }
  }
  throw Unsupported("unknown group kind");
}

inline std::string group_line(const GroupKind& kind) {
  switch (kind.tag()) {
    case GroupTag::Cyclic:
      return "group cyclic " + std::to_string(kind.order());
    case GroupTag::SO2:
      return "group so2";
    case GroupTag::SO3:
      return "group so3";
  }
  throw Unsupported("unknown group kind");
}

}  // namespace io_detail

// ---- rep specs: trivial:<d> | standard | regular | sum:<atom>,<atom>,... ----

inline Representation parse_rep_spec(const std::string& spec, const GroupKind& kind) {
  const auto atom = [&](std::string_view s, int col) -> Representation {
    if (s == "standard") return Representation::standard(kind);
    if (s == "regular") {
      if (kind.tag() != GroupTag::Cyclic)
        throw ParseError("line 1, col " + std::to_string(col) +
                         ": 'regular' needs a cyclic group, got " + kind.str());
      return Representation::regular(kind);
    }
    if (s.rfind("trivial:", 0) == 0) {
      const std::string_view num = s.substr(8);
      int d = 0;
      const auto res = std::from_chars(num.data(), num.data() + num.size(), d);
      if (res.ec != std::errc{} || res.ptr != num.data() + num.size() || d < 1)
        throw ParseError("line 1, col " + std::to_string(col + 8) +
                         ": trivial:<d> needs a positive integer, got '" + std::string(num) + "'");
      return Representation::trivial(kind, d);
    }
    throw ParseError("line 1, col " + std::to_string(col) + ": unknown rep spec '" +
                     std::string(s) + "'");
  };

  if (spec.rfind("sum:", 0) == 0) {
    std::vector<Representation> parts;
    std::size_t pos = 4;
    while (true) {
      const std::size_t comma = spec.find(',', pos);
      const std::string_view part =
          std::string_view(spec).substr(pos, comma == std::string::npos ? spec.size() - pos
                                                                        : comma - pos);
      if (part.empty())
        throw ParseError("line 1, col " + std::to_string(pos + 1) + ": empty sum component");
      if (part.rfind("sum:", 0) == 0)
        throw ParseError("line 1, col " + std::to_string(pos + 1) +
                         ": nested sums are not allowed");
      parts.push_back(atom(part, static_cast<int>(pos) + 1));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return Representation::direct_sum(std::move(parts));
  }
  return atom(spec, 1);
}

// Canonical spec string; nested direct sums flatten (the action is unchanged).
inline std::string format_rep_spec(const Representation& rep) {
  switch (rep.kind()) {
    case Representation::Kind::Trivial:
      return "trivial:" + std::to_string(rep.dim());
    case Representation::Kind::Standard:
      return "standard";
    case Representation::Kind::Regular:
      return "regular";
    case Representation::Kind::DirectSum: {
      std::string out = "sum:";
      bool first = true;
      const auto emit = [&](const Representation& r, auto&& self) -> void {
        if (r.kind() == Representation::Kind::DirectSum) {
          for (const auto& p : r.parts()) self(p, self);
          return;
        }
        if (!first) out += ',';
        first = false;
        out += format_rep_spec(r);
      };
      emit(rep, emit);
      return out;
    }
  }
  throw Unsupported("unknown representation kind");
}

// ---- torsor-graph v1 ----

inline PotentialGraph load_graph(std::string_view text) {
  const auto lines = io_detail::content_lines(text);
  if (lines.empty()) throw ParseError("line 1, col 1: empty graph file");
  io_detail::expect_header(lines[0], "torsor-graph", "v1");
  std::size_t li = 1;

  if (li >= lines.size() || lines[li].second[0].text != "group")
    io_detail::fail(li < lines.size() ? lines[li].first : lines.back().first + 1, 1,
                    "expected 'group <kind>'");
  const auto& [gline, gtoks] = lines[li];
  GroupKind kind = GroupKind::so2();
  if (gtoks.size() == 2 && gtoks[1].text == "so2") kind = GroupKind::so2();
  else if (gtoks.size() == 2 && gtoks[1].text == "so3") kind = GroupKind::so3();
  else if (gtoks.size() == 3 && gtoks[1].text == "cyclic") {
    const long long n = io_detail::parse_int(gtoks[2], gline);
    if (n < 1) io_detail::fail(gline, gtoks[2].col, "cyclic order must be >= 1");
    kind = GroupKind::cyclic(static_cast<int>(n));
  } else {
    io_detail::fail(gline, gtoks[1 < gtoks.size() ? 1 : 0].col,
                    "expected 'so2', 'so3' or 'cyclic <n>'");
  }
  ++li;

  if (li >= lines.size() || lines[li].second[0].text != "vertices" ||
      lines[li].second.size() != 2)
    io_detail::fail(li < lines.size() ? lines[li].first : lines.back().first + 1, 1,
                    "expected 'vertices <n>'");
  const long long nv = io_detail::parse_int(lines[li].second[1], lines[li].first);
  if (nv < 0) io_detail::fail(lines[li].first, lines[li].second[1].col, "negative vertex count");
  ++li;

  std::vector<EdgeInput> inputs;
  std::vector<std::pair<int, int>> seen;
  for (; li < lines.size(); ++li) {
    const auto& [no, toks] = lines[li];
    if (toks[0].text != "edge") io_detail::fail(no, toks[0].col, "expected 'edge u v <payload>'");
    if (toks.size() < 3) io_detail::fail(no, toks[0].col, "edge needs two endpoints");
    const long long u = io_detail::parse_int(toks[1], no);
    const long long v = io_detail::parse_int(toks[2], no);
    if (u < 0 || u >= nv) io_detail::fail(no, toks[1].col, "vertex id out of range");
    if (v < 0 || v >= nv) io_detail::fail(no, toks[2].col, "vertex id out of range");
    if (u == v) io_detail::fail(no, toks[1].col, "self-loop");
    std::size_t next = 3;
    GroupElement psi = io_detail::parse_payload(kind, toks, next, no);
    double weight = 1.0;
    if (next < toks.size()) {
      const auto& t = toks[next];
      if (t.text.rfind("w=", 0) != 0)
        io_detail::fail(no, t.col, "unexpected token '" + std::string(t.text) + "'");
      io_detail::Token wt{t.text.substr(2), t.col + 2};
      weight = io_detail::parse_double(wt, no);
      if (!(weight > 0.0)) io_detail::fail(no, wt.col, "weight must be positive");
      ++next;
    }
    if (next != toks.size()) io_detail::fail(no, toks[next].col, "trailing tokens after edge");
    const auto key = std::make_pair(static_cast<int>(std::min(u, v)),
                                    static_cast<int>(std::max(u, v)));
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      io_detail::fail(no, toks[1].col, "duplicate edge");
    seen.push_back(key);
    inputs.push_back(
        EdgeInput{static_cast<int>(u), static_cast<int>(v), std::move(psi), weight});
  }
  return PotentialGraph(kind, static_cast<int>(nv), inputs);
}

inline std::string save_graph(const PotentialGraph& g) {
  std::string out = "torsor-graph v1\n";
  out += io_detail::group_line(g.kind()) + "\n";
  out += "vertices " + std::to_string(g.num_vertices()) + "\n";
  std::vector<PotentialGraph::Edge> edges = g.edges();
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return std::make_pair(a.u, a.v) < std::make_pair(b.u, b.v);
  });
  for (const auto& e : edges) {
    out += "edge " + std::to_string(e.u) + " " + std::to_string(e.v) + " " +
           io_detail::encode_payload(e.psi);
    if (e.weight != 1.0) out += " w=" + format_double(e.weight);
    out += "\n";
  }
  return out;
}

// ---- torsor-features v1 ----

inline Eigen::MatrixXd load_features(std::string_view text, int num_vertices) {
  const auto lines = io_detail::content_lines(text);
  if (lines.empty()) throw ParseError("line 1, col 1: empty features file");
  io_detail::expect_header(lines[0], "torsor-features", "v1");
  if (lines.size() < 2 || lines[1].second[0].text != "dim" || lines[1].second.size() != 2)
    io_detail::fail(lines.size() > 1 ? lines[1].first : lines[0].first + 1, 1,
                    "expected 'dim <d>'");
  const long long dim = io_detail::parse_int(lines[1].second[1], lines[1].first);
  if (dim < 1) io_detail::fail(lines[1].first, lines[1].second[1].col, "dim must be >= 1");

  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(num_vertices, dim);
  std::vector<char> filled(num_vertices, 0);
  for (std::size_t li = 2; li < lines.size(); ++li) {
    const auto& [no, toks] = lines[li];
    const long long v = io_detail::parse_int(toks[0], no);
    if (v < 0 || v >= num_vertices) io_detail::fail(no, toks[0].col, "vertex id out of range");
    if (filled[v]) io_detail::fail(no, toks[0].col, "duplicate feature row for vertex " +
                                                        std::to_string(v));
    if (static_cast<long long>(toks.size()) != dim + 1)
      io_detail::fail(no, toks.back().col, "expected " + std::to_string(dim) + " values");
    for (long long j = 0; j < dim; ++j)
      values(v, j) = io_detail::parse_double(toks[j + 1], no);
    filled[v] = 1;
  }
  for (int v = 0; v < num_vertices; ++v)
    if (!filled[v])
      throw ParseError("line " + std::to_string(lines.back().first) + ", col 1: vertex " +
                       std::to_string(v) + " has no feature row");
  return values;
}

inline std::string save_features(const Eigen::MatrixXd& values) {
  std::string out = "torsor-features v1\n";
  out += "dim " + std::to_string(values.cols()) + "\n";
  for (int v = 0; v < values.rows(); ++v) {
    out += std::to_string(v);
    for (int j = 0; j < values.cols(); ++j) out += " " + format_double(values(v, j));
    out += "\n";
  }
  return out;
}

// ---- torsor-states v1 ----

inline std::vector<GroupElement> load_states(std::string_view text, const GroupKind& kind,
                                             int num_vertices) {
  const auto lines = io_detail::content_lines(text);
  if (lines.empty()) throw ParseError("line 1, col 1: empty states file");
  io_detail::expect_header(lines[0], "torsor-states", "v1");
  std::vector<std::optional<GroupElement>> slots(num_vertices);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [no, toks] = lines[li];
    const long long v = io_detail::parse_int(toks[0], no);
    if (v < 0 || v >= num_vertices) io_detail::fail(no, toks[0].col, "vertex id out of range");
    if (slots[v]) io_detail::fail(no, toks[0].col, "duplicate state for vertex " +
                                                       std::to_string(v));
    std::size_t next = 1;
    slots[v] = io_detail::parse_payload(kind, toks, next, no);
    if (next != toks.size()) io_detail::fail(no, toks[next].col, "trailing tokens after state");
  }
  std::vector<GroupElement> out;
  out.reserve(num_vertices);
  for (int v = 0; v < num_vertices; ++v) {
    if (!slots[v])
      throw ParseError("line " + std::to_string(lines.back().first) + ", col 1: vertex " +
                       std::to_string(v) + " has no state");
    out.push_back(*slots[v]);
  }
  return out;
}

inline std::string save_states(const std::vector<GroupElement>& states,
                               std::optional<double> objective = std::nullopt) {
  std::string out = "torsor-states v1\n";
  for (std::size_t v = 0; v < states.size(); ++v)
    out += std::to_string(v) + " " + io_detail::encode_payload(states[v]) + "\n";
  if (objective) out += "# objective " + format_double(*objective) + "\n";
  return out;
}

// ---- torsor-kernel v1 ----

struct KernelFile {
  Representation rep_in;
  Representation rep_out;
  std::vector<double> coeffs;
};

inline KernelFile load_kernel(std::string_view text, const GroupKind& kind) {
  const auto lines = io_detail::content_lines(text);
  if (lines.empty()) throw ParseError("line 1, col 1: empty kernel file");
  io_detail::expect_header(lines[0], "torsor-kernel", "v1");
  std::optional<Representation> rin, rout;
  std::vector<double> coeffs;
  bool have_coeffs = false;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [no, toks] = lines[li];
    if (toks[0].text == "rep_in" || toks[0].text == "rep_out") {
      if (toks.size() != 2) io_detail::fail(no, toks[0].col, "expected one rep spec");
      Representation rep = [&] {
        try {
          return parse_rep_spec(std::string(toks[1].text), kind);
        } catch (const ParseError& e) {
          io_detail::fail(no, toks[1].col, e.what());
        }
      }();
      (toks[0].text == "rep_in" ? rin : rout) = std::move(rep);
    } else if (toks[0].text == "coeffs") {
      for (std::size_t j = 1; j < toks.size(); ++j)
        coeffs.push_back(io_detail::parse_double(toks[j], no));
      have_coeffs = true;
    } else {
      io_detail::fail(no, toks[0].col, "expected 'rep_in', 'rep_out' or 'coeffs'");
    }
  }
  if (!rin || !rout || !have_coeffs)
    throw ParseError("line " + std::to_string(lines.back().first) +
                     ", col 1: kernel file needs rep_in, rep_out and coeffs lines");
  return KernelFile{std::move(*rin), std::move(*rout), std::move(coeffs)};
}

inline std::string save_kernel(const TorsorConvLayer& layer) {
  std::string out = "torsor-kernel v1\n";
  out += "rep_in " + format_rep_spec(layer.basis.rep_in) + "\n";
  out += "rep_out " + format_rep_spec(layer.basis.rep_out) + "\n";
  out += "coeffs";
  for (double c : layer.coefficients) out += " " + format_double(c);
  out += "\n";
  return out;
}

// ---- file helpers ----

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

}  // namespace torsor
