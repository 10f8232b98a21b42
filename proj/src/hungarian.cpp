#include "stmmot/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stmmot {

namespace {

// Shortest augmenting path formulation for n <= m. Returns column per row.
std::vector<std::size_t> solve_rows_le_cols(const Tensor& cost) {
    const std::size_t n = cost.dim(0), m = cost.dim(1);
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual source column.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

Assignment hungarian(const Tensor& cost) {
    if (cost.rank() != 2) throw std::invalid_argument("hungarian: cost must be rank 2");
    if (!cost.all_finite()) throw std::invalid_argument("hungarian: costs must be finite");
    const std::size_t n = cost.dim(0), m = cost.dim(1);
    Assignment result;
    if (n == 0 || m == 0) {
        for (std::size_t i = 0; i < n; ++i) result.unmatched_rows.push_back(i);
        for (std::size_t j = 0; j < m; ++j) result.unmatched_cols.push_back(j);
        return result;
    }
    if (n <= m) {
        const auto row_to_col = solve_rows_le_cols(cost);
        for (std::size_t i = 0; i < n; ++i) result.pairs.emplace_back(i, row_to_col[i]);
    } else {
        const auto col_to_row = solve_rows_le_cols(transpose(cost));
        for (std::size_t j = 0; j < m; ++j) result.pairs.emplace_back(col_to_row[j], j);
        std::sort(result.pairs.begin(), result.pairs.end());
    }
    std::vector<char> row_used(n, 0), col_used(m, 0);
    for (const auto& [r, c] : result.pairs) {
        row_used[r] = 1;
        col_used[c] = 1;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!row_used[i]) result.unmatched_rows.push_back(i);
    for (std::size_t j = 0; j < m; ++j)
        if (!col_used[j]) result.unmatched_cols.push_back(j);
    return result;
}

double assignment_cost(const Tensor& cost, const Assignment& a) {
    double total = 0.0;
    for (const auto& [r, c] : a.pairs) total += cost(r, c);
    return total;
}

}  // namespace stmmot
