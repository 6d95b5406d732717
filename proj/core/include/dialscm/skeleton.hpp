#pragma once

#include "dialscm/conversation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dialscm {

// The six candidate wiring rules for which earlier utterances may influence
// a later one. I and II are untyped; III-VI mark each edge with whether the
// endpoints share a speaker.
enum class SkeletonVariant { I, II, III, IV, V, VI };

std::string variant_name(SkeletonVariant v);
SkeletonVariant variant_from_name(const std::string& name);

struct SkeletonEdge {
    int source = 0; // 1-based utterance index exerting influence
    int target = 0; // 1-based utterance index receiving it
    int type = -1;  // -1 untyped; else 1 same speaker, 0 different
};

bool operator==(const SkeletonEdge& a, const SkeletonEdge& b);

struct CognSkeleton {
    SkeletonVariant variant = SkeletonVariant::I;
    int n = 0;
    int k = 0; // window parameter; 0 where the variant ignores it
    std::vector<SkeletonEdge> edges; // sorted by (target, source)

    bool typed() const;
    std::string to_json() const;
};

// Builds the edge set for `variant` over the conversation. `k` is required
// for IV and VI and ignored elsewhere. With inclusive_bounds the generating
// loops start at the first utterance instead of the second, so utterance 1
// can also appear as a target (and as a source for II-IV).
CognSkeleton build_skeleton(SkeletonVariant variant, const Conversation& conv,
                            int k = 0, bool inclusive_bounds = false);

// n x n row-major matrix, entry [target][source]: -1 no edge, otherwise the
// edge type (1 for untyped variants). Row t lists the influencers of U_t.
std::vector<int> adjacency_matrix(const CognSkeleton& s);

// n x n row-major boolean mask, entry [source][target] true iff the edge
// source -> target exists. Diagonal is always false.
std::vector<std::uint8_t> skeleton_mask(const CognSkeleton& s);

// Comma-separated rows of adjacency_matrix, one line per target.
std::string adjacency_csv(const CognSkeleton& s);

} // namespace dialscm
