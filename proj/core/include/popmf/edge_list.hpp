#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <vector>

#include "popmf/interaction.hpp"

namespace popmf {

/// Parsed plain-text edge list.
///
/// Format: one `u v` or `u v weight` per line, 0-indexed vertices. Blank lines
/// and everything after `#` are ignored. A line `n <N>` may appear before the
/// first edge to declare the vertex count; otherwise N is max index + 1.
struct EdgeList {
  std::size_t n = 0;
  std::vector<Edge> edges;
};

EdgeList read_edge_list(std::istream& in);
EdgeList load_edge_list(const std::filesystem::path& path);

/// Per-vertex link failure sets.
///
/// Format: a required line `n <N>`, then `i j` lines meaning j is in F_i.
/// Comments and blank lines as for edge lists.
struct LinkFailures {
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> failures;
};

LinkFailures read_link_failures(std::istream& in);
LinkFailures load_link_failures(const std::filesystem::path& path);

/// Symmetric weighted adjacency rows from an undirected edge list
/// (A_uv = A_vu = weight).
SparseRows adjacency_rows(const EdgeList& list);

}  // namespace popmf
