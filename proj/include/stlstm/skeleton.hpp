#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "stlstm/errors.hpp"

namespace stlstm {

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

/// Joint adjacency tree. Indices are 0-based in memory; files and printed
/// orders are 1-based.
struct SkeletonTopology {
    std::vector<std::size_t> parent;  // kNoParent for the root
    std::size_t root = 0;
    std::vector<std::string> names;   // optional, empty or joint_count() entries

    std::size_t joint_count() const noexcept { return parent.size(); }

    /// Children of every joint in ascending index order.
    std::vector<std::vector<std::size_t>> children() const {
        std::vector<std::vector<std::size_t>> out(parent.size());
        for (std::size_t j = 0; j < parent.size(); ++j)
            if (parent[j] != kNoParent && parent[j] < parent.size()) out[parent[j]].push_back(j);
        return out;
    }

    bool operator==(const SkeletonTopology&) const = default;
};

enum class TraversalKind { Chain, Tree, Concatenated };

inline std::string to_string(TraversalKind kind) {
    switch (kind) {
    case TraversalKind::Chain: return "chain";
    case TraversalKind::Tree: return "tree";
    case TraversalKind::Concatenated: return "concatenated";
    }
    return "unknown";
}

/// Sequence of joints visited along the spatial axis of the network.
struct TraversalOrder {
    std::vector<std::size_t> steps;  // 0-based joint indices
    TraversalKind kind = TraversalKind::Chain;

    std::size_t size() const noexcept { return steps.size(); }

    /// 1-based, hyphen-separated, e.g. "1-2-3-2-1".
    std::string to_string() const {
        std::string out;
        for (std::size_t k = 0; k < steps.size(); ++k) {
            if (k) out += '-';
            out += std::to_string(steps[k] + 1);
        }
        return out;
    }

    bool operator==(const TraversalOrder&) const = default;
};

namespace detail {

inline std::string joint_list(const std::vector<std::size_t>& joints) {
    std::string out;
    for (std::size_t k = 0; k < joints.size(); ++k) {
        if (k) out += ", ";
        out += std::to_string(joints[k] + 1);
    }
    return out;
}

} // namespace detail

/// Throws TopologyError unless parent links form one tree rooted at `t.root`.
inline void validate_topology(const SkeletonTopology& t) {
    const std::size_t n = t.joint_count();
    if (n == 0) throw TopologyError(TopologyErrorKind::Empty, {}, "topology has no joints");
    if (!t.names.empty() && t.names.size() != n)
        throw TopologyError(TopologyErrorKind::OrphanJoint, {},
                            "topology has " + std::to_string(t.names.size()) + " names for " +
                                std::to_string(n) + " joints");

    std::vector<std::size_t> orphans;
    std::vector<std::size_t> roots;
    for (std::size_t j = 0; j < n; ++j) {
        if (t.parent[j] == kNoParent)
            roots.push_back(j);
        else if (t.parent[j] >= n || t.parent[j] == j)
            orphans.push_back(j);
    }
    if (!orphans.empty())
        throw TopologyError(TopologyErrorKind::OrphanJoint, orphans,
                            "joints with invalid parent links: " + detail::joint_list(orphans));
    if (roots.size() > 1)
        throw TopologyError(TopologyErrorKind::MultipleRoots, roots,
                            "multiple roots: " + detail::joint_list(roots));

    // Walk each joint's ancestor chain; state 1 = on current path, 2 = known to reach a root.
    std::vector<int> state(n, 0);
    for (std::size_t start = 0; start < n; ++start) {
        std::vector<std::size_t> path;
        std::size_t j = start;
        while (j != kNoParent && state[j] == 0) {
            state[j] = 1;
            path.push_back(j);
            j = t.parent[j];
        }
        if (j != kNoParent && state[j] == 1) {
            auto first = std::find(path.begin(), path.end(), j);
            std::vector<std::size_t> cycle(first, path.end());
            std::sort(cycle.begin(), cycle.end());
            throw TopologyError(TopologyErrorKind::Cycle, cycle, "cycle among joints: " + detail::joint_list(cycle));
        }
        for (std::size_t p : path) state[p] = 2;
    }
    if (roots.empty()) throw TopologyError(TopologyErrorKind::NoRoot, {}, "topology has no root");
    if (roots.front() != t.root)
        throw TopologyError(TopologyErrorKind::RootMismatch, {t.root, roots.front()},
                            "declared root " + std::to_string(t.root + 1) + " has a parent; actual root is " +
                                std::to_string(roots.front() + 1));
}

/// Joints in declared index order.
inline TraversalOrder chain_order(const SkeletonTopology& t) {
    TraversalOrder order{std::vector<std::size_t>(t.joint_count()), TraversalKind::Chain};
    for (std::size_t j = 0; j < t.joint_count(); ++j) order.steps[j] = j;
    return order;
}

/// Bidirectional depth-first walk from the root and back: a joint is emitted
/// on entry and again after each child subtree returns. Siblings go in
/// ascending index order. Length is 2(J-1)+1.
inline TraversalOrder tree_traversal(const SkeletonTopology& t) {
    validate_topology(t);
    const auto kids = t.children();
    TraversalOrder order{{}, TraversalKind::Tree};
    order.steps.reserve(2 * t.joint_count() - 1);

    struct Frame {
        std::size_t joint;
        std::size_t next_child;
    };
    std::vector<Frame> stack{{t.root, 0}};
    order.steps.push_back(t.root);
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_child < kids[top.joint].size()) {
            const std::size_t child = kids[top.joint][top.next_child++];
            order.steps.push_back(child);
            stack.push_back({child, 0});
        } else {
            stack.pop_back();
            if (!stack.empty()) order.steps.push_back(stack.back().joint);
        }
    }
    return order;
}

/// Joins per-skeleton orders into one global index space. `joint_offsets[k]`
/// is added to every index of `orders[k]`.
inline TraversalOrder concat_traversals(const std::vector<TraversalOrder>& orders,
                                        const std::vector<std::size_t>& joint_offsets) {
    if (orders.size() != joint_offsets.size())
        throw DimensionError("concat_traversals: " + std::to_string(orders.size()) + " orders but " +
                             std::to_string(joint_offsets.size()) + " offsets");
    struct Range {
        std::size_t lo, hi, which;
    };
    std::vector<Range> ranges;
    for (std::size_t k = 0; k < orders.size(); ++k) {
        if (orders[k].steps.empty()) continue;
        const auto [mn, mx] = std::minmax_element(orders[k].steps.begin(), orders[k].steps.end());
        ranges.push_back({*mn + joint_offsets[k], *mx + joint_offsets[k], k});
    }
    std::sort(ranges.begin(), ranges.end(), [](const Range& a, const Range& b) { return a.lo < b.lo; });
    for (std::size_t k = 1; k < ranges.size(); ++k)
        if (ranges[k].lo <= ranges[k - 1].hi)
            throw DataError("concat_traversals: index ranges of skeletons " + std::to_string(ranges[k - 1].which + 1) +
                            " and " + std::to_string(ranges[k].which + 1) + " overlap");

    TraversalOrder out{{}, TraversalKind::Concatenated};
    for (std::size_t k = 0; k < orders.size(); ++k)
        for (std::size_t j : orders[k].steps) out.steps.push_back(j + joint_offsets[k]);
    return out;
}

/// Builds the order named by `mode` ("chain" or "tree").
inline TraversalOrder make_traversal(const SkeletonTopology& t, TraversalKind mode) {
    validate_topology(t);
    switch (mode) {
    case TraversalKind::Chain: return chain_order(t);
    case TraversalKind::Tree: return tree_traversal(t);
    case TraversalKind::Concatenated: break;
    }
    throw ConfigError("make_traversal: concatenated orders are built with concat_traversals");
}

inline TraversalKind parse_traversal_kind(const std::string& s) {
    if (s == "chain") return TraversalKind::Chain;
    if (s == "tree") return TraversalKind::Tree;
    throw ConfigError("unknown traversal mode '" + s + "' (expected chain or tree)");
}

/// The 16-joint body tree used throughout the examples and synthetic data:
/// spine centre (1) -> neck (2) -> head (3), left arm 4-5-6, right arm 7-8-9;
/// spine centre (1) -> hip centre (10) -> left leg 11-12-13, right leg 14-15-16.
inline SkeletonTopology body16_topology() {
    SkeletonTopology t;
    //                 1         2  3  4  5  6  7  8  9  10 11  12  13  14  15  16
    t.parent = {kNoParent, 0, 1, 1, 3, 4, 1, 6, 7, 0, 9, 10, 11, 9, 13, 14};
    t.root = 0;
    t.names = {"spine",      "neck",      "head",       "l_shoulder", "l_elbow",   "l_hand",
               "r_shoulder", "r_elbow",   "r_hand",     "hip",        "l_hip",     "l_knee",
               "l_foot",     "r_hip",     "r_knee",     "r_foot"};
    return t;
}

} // namespace stlstm
