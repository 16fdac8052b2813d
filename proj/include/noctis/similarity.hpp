#pragma once

// Vector- and patch-level similarity kernels, including the cyclic
// (roundtrip) distance used to filter patch matches.
//
// Patch indices in this header always refer to positions in a descriptor's
// list of *valid* patches (grid cells in row-major order with valid = 1),
// never to raw grid cells.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "noctis/descriptor.hpp"
#include "noctis/error.hpp"

namespace noctis {

namespace sim_detail {

// Four interleaved accumulators, combined in a fixed order. The result does
// not depend on anything but the two inputs.
inline double dot(const float* a, const float* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += static_cast<double>(a[i]) * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

inline double norm(const float* a, std::size_t n) { return std::sqrt(dot(a, a, n)); }

// Valid patches of one descriptor, with precomputed norms. Borrows the
// descriptor's storage.
struct ValidPatches {
    std::size_t dim = 0;
    std::vector<const float*> rows;
    std::vector<GridPos> positions;
    std::vector<double> norms;

    std::size_t size() const { return rows.size(); }
};

inline ValidPatches pack(const PatchGridDescriptor& d) {
    ValidPatches out;
    out.dim = d.embed_dim;
    for (std::size_t cell = 0; cell < d.valid.size(); ++cell) {
        if (!d.valid[cell]) {
            continue;
        }
        const float* row = d.patches.data() + cell * d.embed_dim;
        const double n = norm(row, d.embed_dim);
        if (!(n > 0.0)) {
            throw InvalidInput("zero vector: valid patch has zero norm");
        }
        out.rows.push_back(row);
        out.positions.push_back(d.position(cell));
        out.norms.push_back(n);
    }
    if (out.rows.empty()) {
        throw InvalidInput("descriptor has no valid patch");
    }
    return out;
}

// Row-major a.size() x b.size() cosine similarities into `out`.
inline void fill_similarity(const ValidPatches& a, const ValidPatches& b, std::span<double> out) {
    const std::size_t nb = b.size();
    for (std::size_t l = 0; l < a.size(); ++l) {
        double* row = out.data() + l * nb;
        for (std::size_t j = 0; j < nb; ++j) {
            row[j] = dot(a.rows[l], b.rows[j], a.dim) / (a.norms[l] * b.norms[j]);
        }
    }
}

} // namespace sim_detail

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw InvalidInput("cosine_similarity: dimension mismatch");
    }
    const double na = sim_detail::norm(a.data(), a.size());
    const double nb = sim_detail::norm(b.data(), b.size());
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw InvalidInput("zero vector");
    }
    return sim_detail::dot(a.data(), b.data(), a.size()) / (na * nb);
}

struct PatchSimMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major
    std::vector<GridPos> row_positions;
    std::vector<GridPos> col_positions;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

inline PatchSimMatrix pairwise_patch_similarity(const PatchGridDescriptor& a, const PatchGridDescriptor& b) {
    if (a.embed_dim != b.embed_dim) {
        throw InvalidInput("pairwise_patch_similarity: dimension mismatch");
    }
    const auto pa = sim_detail::pack(a);
    const auto pb = sim_detail::pack(b);
    PatchSimMatrix m;
    m.rows = pa.size();
    m.cols = pb.size();
    m.values.resize(m.rows * m.cols);
    sim_detail::fill_similarity(pa, pb, m.values);
    m.row_positions = pa.positions;
    m.col_positions = pb.positions;
    return m;
}

// Index of the largest entry; the lowest index wins ties.
inline std::size_t best_match_index(std::span<const double> row) {
    if (row.empty()) {
        throw InvalidInput("best_match_index: empty row");
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) {
            best = j;
        }
    }
    return best;
}

struct CyclicDistanceMap {
    // Indexed by valid crop patch l.
    std::vector<std::size_t> best_match_in_b; // t: best template patch for l
    std::vector<std::size_t> roundtrip_in_a;  // u: best crop patch for t
    std::vector<double> cdist;                // grid distance between l and u

    std::size_t size() const { return cdist.size(); }
};

// Roundtrip l -> t -> u over a row-major n_a x n_b similarity block.
inline CyclicDistanceMap cyclic_distance_map(std::span<const double> sims, std::size_t n_a, std::size_t n_b,
                                             std::span<const GridPos> positions_a) {
    CyclicDistanceMap out;
    out.best_match_in_b.resize(n_a);
    out.roundtrip_in_a.resize(n_a);
    out.cdist.resize(n_a);

    // Column-wise argmax, scanning rows in increasing order so the first
    // (lowest) row index survives ties.
    std::vector<std::size_t> col_best(n_b, 0);
    for (std::size_t l = 1; l < n_a; ++l) {
        const double* row = sims.data() + l * n_b;
        for (std::size_t j = 0; j < n_b; ++j) {
            if (row[j] > sims[col_best[j] * n_b + j]) {
                col_best[j] = l;
            }
        }
    }
    for (std::size_t l = 0; l < n_a; ++l) {
        const auto t = best_match_index(sims.subspan(l * n_b, n_b));
        const auto u = col_best[t];
        out.best_match_in_b[l] = t;
        out.roundtrip_in_a[l] = u;
        out.cdist[l] = grid_distance(positions_a[l], positions_a[u]);
    }
    return out;
}

inline CyclicDistanceMap cyclic_distance_map(const PatchSimMatrix& m) {
    return cyclic_distance_map(m.values, m.rows, m.cols, m.row_positions);
}

inline CyclicDistanceMap cyclic_distance_map(const PatchGridDescriptor& crop, const PatchGridDescriptor& tmpl) {
    return cyclic_distance_map(pairwise_patch_similarity(crop, tmpl));
}

// true where cdist <= delta_ct.
inline std::vector<bool> patch_filter_flags(const CyclicDistanceMap& cmap, double delta_ct) {
    if (!(delta_ct >= 0.0)) {
        throw InvalidInput("delta_ct must be >= 0");
    }
    std::vector<bool> flags(cmap.size());
    for (std::size_t l = 0; l < cmap.size(); ++l) {
        flags[l] = cmap.cdist[l] <= delta_ct;
    }
    return flags;
}

} // namespace noctis
