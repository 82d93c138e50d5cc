#include "popmf/edge_list.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "popmf/error.hpp"

namespace popmf {

namespace {

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return hash == std::string::npos ? line : line.substr(0, hash);
}

[[noreturn]] void parse_failure(std::size_t line_no, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line_no << ": " << what;
  throw ValidationError(msg.str());
}

std::size_t parse_index(const std::string& token, std::size_t line_no) {
  if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
    parse_failure(line_no, "expected a nonnegative vertex index, got '" + token + "'");
  }
  return std::stoull(token);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

}  // namespace

EdgeList read_edge_list(std::istream& in) {
  EdgeList list;
  std::size_t declared = 0;
  std::size_t max_index = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(strip_comment(line));
    std::vector<std::string> parts;
    for (std::string t; tokens >> t;) parts.push_back(t);
    if (parts.empty()) continue;
    if (parts[0] == "n") {
      if (parts.size() != 2 || !list.edges.empty()) parse_failure(line_no, "'n <N>' must precede all edges");
      declared = parse_index(parts[1], line_no);
      continue;
    }
    if (parts.size() != 2 && parts.size() != 3) parse_failure(line_no, "expected 'u v' or 'u v weight'");
    Edge e{parse_index(parts[0], line_no), parse_index(parts[1], line_no), 1.0};
    if (parts.size() == 3) {
      try {
        std::size_t used = 0;
        e.weight = std::stod(parts[2], &used);
        if (used != parts[2].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        parse_failure(line_no, "bad weight '" + parts[2] + "'");
      }
      if (!std::isfinite(e.weight) || e.weight < 0.0) parse_failure(line_no, "weight must be nonnegative");
    }
    max_index = std::max({max_index, e.u, e.v});
    list.edges.push_back(e);
  }
  list.n = declared != 0 ? declared : (list.edges.empty() ? 0 : max_index + 1);
  if (declared != 0 && !list.edges.empty() && max_index >= declared) {
    throw ValidationError("edge list references vertex " + std::to_string(max_index) + " but declares n " +
                          std::to_string(declared));
  }
  return list;
}

EdgeList load_edge_list(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_edge_list(in);
}

LinkFailures read_link_failures(std::istream& in) {
  LinkFailures lf;
  std::string line;
  std::size_t line_no = 0;
  bool have_n = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(strip_comment(line));
    std::vector<std::string> parts;
    for (std::string t; tokens >> t;) parts.push_back(t);
    if (parts.empty()) continue;
    if (!have_n) {
      if (parts.size() != 2 || parts[0] != "n") parse_failure(line_no, "link failure file must start with 'n <N>'");
      lf.n = parse_index(parts[1], line_no);
      lf.failures.assign(lf.n, {});
      have_n = true;
      continue;
    }
    if (parts.size() != 2) parse_failure(line_no, "expected 'i j'");
    const auto i = parse_index(parts[0], line_no);
    const auto j = parse_index(parts[1], line_no);
    if (i >= lf.n || j >= lf.n) parse_failure(line_no, "vertex index out of range");
    lf.failures[i].push_back(j);
  }
  if (!have_n) throw ValidationError("link failure file is empty");
  return lf;
}

LinkFailures load_link_failures(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return read_link_failures(in);
}

SparseRows adjacency_rows(const EdgeList& list) {
  SparseRows rows(list.n);
  for (const auto& e : list.edges) {
    if (e.u >= list.n || e.v >= list.n) throw ValidationError("edge references a vertex out of range");
    rows[e.u].push_back({static_cast<std::uint32_t>(e.v), e.weight});
    if (e.u != e.v) rows[e.v].push_back({static_cast<std::uint32_t>(e.u), e.weight});
  }
  return rows;
}

}  // namespace popmf
