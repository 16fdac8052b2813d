#pragma once

// Uncompressed run-length encoded binary masks.
//
// Runs are taken over the pixels in column-major (Fortran) order and always
// start with a run of zeros, which may be empty. For a 2x2 mask whose
// column-major pixel sequence is 1,0,0,1 the counts are {0,1,2,1}.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "noctis/error.hpp"

namespace noctis {

struct RleMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> counts;

    std::uint64_t pixel_count() const {
        return static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
    }

    bool operator==(const RleMask&) const = default;
};

// Dense binary mask, row-major.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
    std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }

    bool operator==(const BinaryMask&) const = default;
};

inline void validate_rle(const RleMask& m) {
    if (m.height < 0 || m.width < 0) {
        throw InvalidInput("RLE has negative size");
    }
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < m.counts.size(); ++i) {
        if (m.counts[i] == 0 && i > 0) {
            throw InvalidInput("malformed RLE: zero-length run after position 0");
        }
        total += m.counts[i];
    }
    if (total != m.pixel_count()) {
        throw InvalidInput("RLE length mismatch: counts sum to " + std::to_string(total) + ", expected " +
                           std::to_string(m.pixel_count()));
    }
}

inline RleMask rle_encode(const BinaryMask& mask) {
    if (mask.pixels.size() != static_cast<std::size_t>(mask.height) * mask.width) {
        throw InvalidInput("binary mask buffer does not match its size");
    }
    RleMask out{mask.height, mask.width, {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (int c = 0; c < mask.width; ++c) {
        for (int r = 0; r < mask.height; ++r) {
            const std::uint8_t v = mask.at(r, c) ? 1 : 0;
            if (v != current) {
                out.counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    }
    if (run > 0 || out.counts.empty()) {
        out.counts.push_back(run);
    }
    return out;
}

inline BinaryMask rle_decode(const RleMask& rle) {
    validate_rle(rle);
    BinaryMask out(rle.height, rle.width);
    std::uint64_t pos = 0;
    std::uint8_t value = 0;
    for (const auto count : rle.counts) {
        for (std::uint32_t k = 0; k < count; ++k, ++pos) {
            const auto col = static_cast<int>(pos / static_cast<std::uint64_t>(rle.height));
            const auto row = static_cast<int>(pos % static_cast<std::uint64_t>(rle.height));
            out.at(row, col) = value;
        }
        value ^= 1;
    }
    return out;
}

inline std::uint64_t rle_area(const RleMask& m) {
    std::uint64_t area = 0;
    for (std::size_t i = 1; i < m.counts.size(); i += 2) {
        area += m.counts[i];
    }
    return area;
}

// Number of pixels set in both masks, computed by walking both run lists.
inline std::uint64_t rle_intersection_area(const RleMask& a, const RleMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw InvalidInput("mask size mismatch");
    }
    std::size_t ia = 0, ib = 0;
    std::uint64_t left_a = a.counts.empty() ? 0 : a.counts[0];
    std::uint64_t left_b = b.counts.empty() ? 0 : b.counts[0];
    bool va = false, vb = false;
    std::uint64_t inter = 0;
    while (ia < a.counts.size() && ib < b.counts.size()) {
        const std::uint64_t step = std::min(left_a, left_b);
        if (va && vb) {
            inter += step;
        }
        left_a -= step;
        left_b -= step;
        while (left_a == 0 && ia < a.counts.size()) {
            if (++ia < a.counts.size()) {
                left_a = a.counts[ia];
                va = !va;
            }
        }
        while (left_b == 0 && ib < b.counts.size()) {
            if (++ib < b.counts.size()) {
                left_b = b.counts[ib];
                vb = !vb;
            }
        }
    }
    return inter;
}

// |a ∩ b| / |a ∪ b|. Two empty masks have no defined IoU.
inline double mask_iou(const RleMask& a, const RleMask& b) {
    const auto inter = rle_intersection_area(a, b);
    const auto uni = rle_area(a) + rle_area(b) - inter;
    if (uni == 0) {
        throw InvalidInput("undefined IoU: both masks are empty");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline nlohmann::ordered_json rle_to_json(const RleMask& m) {
    nlohmann::ordered_json j;
    j["size"] = {m.height, m.width};
    j["counts"] = m.counts;
    return j;
}

template <typename Json>
RleMask rle_from_json(const Json& j) {
    try {
        RleMask m;
        const auto& size = j.at("size");
        if (!size.is_array() || size.size() != 2) {
            throw InvalidInput("RLE size must be [H, W]");
        }
        m.height = size[0].template get<int>();
        m.width = size[1].template get<int>();
        m.counts = j.at("counts").template get<std::vector<std::uint32_t>>();
        validate_rle(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad RLE mask: ") + e.what());
    }
}

} // namespace noctis
