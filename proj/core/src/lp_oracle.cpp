#include "csa/lp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace csa {

namespace {

constexpr double kReducedCostTol = 1e-10;

struct Cell {
  int row;
  int col;
};

// Basis bookkeeping for the transportation simplex: the basic cells form a
// spanning tree on the bipartite (rows + cols) node set.
struct Basis {
  int rows, cols;
  std::vector<std::vector<int>> is_basic;  // rows x cols, -1 or index into cells
  std::vector<Cell> cells;

  Basis(int m, int n) : rows(m), cols(n), is_basic(m, std::vector<int>(n, -1)) {}

  void add(int r, int c) {
    is_basic[r][c] = static_cast<int>(cells.size());
    cells.push_back({r, c});
  }
  void remove(int r, int c) {
    int idx = is_basic[r][c];
    int last = static_cast<int>(cells.size()) - 1;
    if (idx != last) {
      cells[idx] = cells[last];
      is_basic[cells[idx].row][cells[idx].col] = idx;
    }
    cells.pop_back();
    is_basic[r][c] = -1;
  }
};

}  // namespace

LpSolution lp_oracle(const Matrix& cost, const AugmentedMarginals& marginals) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  if (m > 16 || n > 8)
    throw Error("lp_oracle: instance too large (" + std::to_string(m) + "x" +
                std::to_string(n) + ")");
  if (marginals.row.size() != m || marginals.col.size() != n)
    throw Error("lp_oracle: marginal lengths do not match the cost matrix");

  Vector supply = marginals.row;
  Vector demand = marginals.col;
  double imbalance = supply.sum() - demand.sum();
  if (std::abs(imbalance) > 1e-9)
    throw Error("lp_oracle: unbalanced marginals");
  demand[n - 1] += imbalance;  // absorb float dust so sums match exactly

  // Northwest-corner start: exactly m + n - 1 basic cells, degenerate zeros
  // included.
  Matrix flow = Matrix::Zero(m, n);
  Basis basis(m, n);
  {
    Vector s = supply, d = demand;
    int i = 0, j = 0;
    while (true) {
      double x = std::min(s[i], d[j]);
      flow(i, j) = x;
      basis.add(i, j);
      s[i] -= x;
      d[j] -= x;
      if (i == m - 1 && j == n - 1) break;
      if (s[i] <= d[j] && i < m - 1)
        ++i;
      else if (j < n - 1)
        ++j;
      else
        ++i;
    }
  }

  const int node_count = m + n;
  std::vector<double> potential(node_count);
  std::vector<std::vector<std::pair<int, int>>> adjacency(node_count);  // (neighbor, cell)

  auto rebuild_adjacency = [&] {
    for (auto& a : adjacency) a.clear();
    for (int c = 0; c < static_cast<int>(basis.cells.size()); ++c) {
      int rn = basis.cells[c].row;
      int cn = m + basis.cells[c].col;
      adjacency[rn].push_back({cn, c});
      adjacency[cn].push_back({rn, c});
    }
  };

  // Solve u_i + v_j = C_ij over the basis tree (u_0 fixed at 0).
  auto compute_potentials = [&] {
    rebuild_adjacency();
    std::vector<bool> seen(node_count, false);
    std::deque<int> queue{0};
    potential[0] = 0.0;
    seen[0] = true;
    while (!queue.empty()) {
      int node = queue.front();
      queue.pop_front();
      for (auto [next, cell] : adjacency[node]) {
        if (seen[next]) continue;
        const Cell& bc = basis.cells[cell];
        potential[next] = cost(bc.row, bc.col) - potential[node];
        seen[next] = true;
        queue.push_back(next);
      }
    }
    if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
      throw Error("lp_oracle: basis lost connectivity");
  };

  int pivots = 0;
  const int max_pivots = 50000;
  while (true) {
    compute_potentials();

    // Bland: first cell (row-major) with negative reduced cost enters.
    int er = -1, ec = -1;
    for (int i = 0; i < m && er < 0; ++i) {
      for (int j = 0; j < n; ++j) {
        if (basis.is_basic[i][j] >= 0) continue;
        double reduced = cost(i, j) - potential[i] - potential[m + j];
        if (reduced < -kReducedCostTol) {
          er = i;
          ec = j;
          break;
        }
      }
    }
    if (er < 0) break;  // optimal

    // Unique tree path from the entering column node back to its row node.
    rebuild_adjacency();
    std::vector<int> parent(node_count, -1), parent_cell(node_count, -1);
    std::deque<int> queue{m + ec};
    parent[m + ec] = m + ec;
    while (!queue.empty()) {
      int node = queue.front();
      queue.pop_front();
      if (node == er) break;
      for (auto [next, cell] : adjacency[node]) {
        if (parent[next] != -1) continue;
        parent[next] = node;
        parent_cell[next] = cell;
        queue.push_back(next);
      }
    }
    if (parent[er] == -1) throw Error("lp_oracle: no pivot cycle found");

    std::vector<Cell> path;  // from er back to m+ec, alternating col/row nodes
    for (int node = er; node != m + ec; node = parent[node])
      path.push_back(basis.cells[parent_cell[node]]);

    // Entering gets +theta; path edges alternate -, +, -, ... starting at the
    // edge incident to the entering row.
    double theta = std::numeric_limits<double>::infinity();
    Cell leaving{-1, -1};
    for (std::size_t p = 0; p < path.size(); p += 2) {
      if (flow(path[p].row, path[p].col) < theta - 1e-15) {
        theta = flow(path[p].row, path[p].col);
        leaving = path[p];
      }
    }
    if (leaving.row < 0) throw Error("lp_oracle: degenerate cycle without leaving arc");

    flow(er, ec) += theta;
    for (std::size_t p = 0; p < path.size(); ++p) {
      double sign = (p % 2 == 0) ? -1.0 : 1.0;
      flow(path[p].row, path[p].col) += sign * theta;
      if (flow(path[p].row, path[p].col) < 0) flow(path[p].row, path[p].col) = 0.0;
    }
    basis.remove(leaving.row, leaving.col);
    basis.add(er, ec);

    if (++pivots > max_pivots) throw Error("lp_oracle: pivot limit exceeded");
  }

  LpSolution solution;
  solution.coupling = flow;
  solution.objective = (flow.array() * cost.array()).sum();
  solution.row_potentials.resize(m);
  solution.col_potentials.resize(n);
  for (int i = 0; i < m; ++i) solution.row_potentials[i] = potential[i];
  for (int j = 0; j < n; ++j) solution.col_potentials[j] = potential[m + j];
  solution.pivots = pivots;
  return solution;
}

}  // namespace csa
