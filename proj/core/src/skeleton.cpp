#include "dialscm/skeleton.hpp"

#include "dialscm/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dialscm {

namespace {

// Loops run over utterances 2..N by default; inclusive bounds extend them
// to start at 1, letting the first utterance participate on both sides.
int loop_start(bool inclusive_bounds) { return inclusive_bounds ? 1 : 2; }

int speaker_match(const Conversation& conv, int a, int b) {
    return conv.speaker_of(a) == conv.speaker_of(b) ? 1 : 0;
}

void require_window(SkeletonVariant v, int k) {
    if (k < 1) {
        throw ValidationError("variant " + variant_name(v) +
                              " needs a window parameter k >= 1");
    }
}

void canonicalize(std::vector<SkeletonEdge>& edges) {
    std::sort(edges.begin(), edges.end(), [](const SkeletonEdge& a, const SkeletonEdge& b) {
        if (a.target != b.target) return a.target < b.target;
        return a.source < b.source;
    });
}

} // namespace

std::string variant_name(SkeletonVariant v) {
    switch (v) {
        case SkeletonVariant::I: return "I";
        case SkeletonVariant::II: return "II";
        case SkeletonVariant::III: return "III";
        case SkeletonVariant::IV: return "IV";
        case SkeletonVariant::V: return "V";
        case SkeletonVariant::VI: return "VI";
    }
    throw ValidationError("unknown skeleton variant");
}

SkeletonVariant variant_from_name(const std::string& name) {
    if (name == "I" || name == "i" || name == "1") return SkeletonVariant::I;
    if (name == "II" || name == "ii" || name == "2") return SkeletonVariant::II;
    if (name == "III" || name == "iii" || name == "3") return SkeletonVariant::III;
    if (name == "IV" || name == "iv" || name == "4") return SkeletonVariant::IV;
    if (name == "V" || name == "v" || name == "5") return SkeletonVariant::V;
    if (name == "VI" || name == "vi" || name == "6") return SkeletonVariant::VI;
    throw ValidationError("unknown skeleton variant '" + name + "'");
}

bool operator==(const SkeletonEdge& a, const SkeletonEdge& b) {
    return a.source == b.source && a.target == b.target && a.type == b.type;
}

bool CognSkeleton::typed() const {
    return variant != SkeletonVariant::I && variant != SkeletonVariant::II;
}

CognSkeleton build_skeleton(SkeletonVariant variant, const Conversation& conv, int k,
                            bool inclusive_bounds) {
    conv.validate();
    const int n = conv.size();
    const int lo = loop_start(inclusive_bounds);

    CognSkeleton s;
    s.variant = variant;
    s.n = n;
    s.k = (variant == SkeletonVariant::IV || variant == SkeletonVariant::VI) ? k : 0;

    switch (variant) {
        case SkeletonVariant::I:
            // Each utterance influences its immediate successor.
            for (int i = lo; i <= n - 1; ++i) {
                s.edges.push_back({i, i + 1, -1});
            }
            break;
        case SkeletonVariant::II:
            // Every utterance influences every other, regardless of order.
            for (int i = lo; i <= n; ++i) {
                for (int j = lo; j <= n; ++j) {
                    if (i == j) continue;
                    s.edges.push_back({j, i, -1});
                }
            }
            break;
        case SkeletonVariant::III:
            // As II, with edges marked by speaker identity.
            for (int i = lo; i <= n; ++i) {
                for (int j = lo; j <= n; ++j) {
                    if (i == j) continue;
                    s.edges.push_back({j, i, speaker_match(conv, j, i)});
                }
            }
            break;
        case SkeletonVariant::IV:
            // As III, restricted to pairs strictly closer than k turns apart.
            require_window(variant, k);
            for (int i = lo; i <= n; ++i) {
                for (int j = lo; j <= n; ++j) {
                    if (i == j) continue;
                    if (std::abs(i - j) >= k) continue;
                    s.edges.push_back({j, i, speaker_match(conv, j, i)});
                }
            }
            break;
        case SkeletonVariant::V:
            // Only the immediately preceding utterance influences each turn.
            for (int i = lo; i <= n; ++i) {
                const int g = i - 1;
                if (g < 1) continue;
                s.edges.push_back({g, i, speaker_match(conv, g, i)});
            }
            break;
        case SkeletonVariant::VI:
            // Walk backwards from each turn, stopping after k same-speaker
            // utterances have been taken in; other-speaker turns in between
            // are included without counting against the budget.
            require_window(variant, k);
            for (int i = lo; i <= n; ++i) {
                int c = 0;
                int g = i - 1;
                while (g > 0 && c < k) {
                    const int m = speaker_match(conv, g, i);
                    s.edges.push_back({g, i, m});
                    if (m == 1) c += 1;
                    g -= 1;
                }
            }
            break;
    }

    canonicalize(s.edges);
    return s;
}

std::vector<int> adjacency_matrix(const CognSkeleton& s) {
    const std::size_t n = static_cast<std::size_t>(s.n);
    std::vector<int> matrix(n * n, -1);
    for (const SkeletonEdge& e : s.edges) {
        const std::size_t row = static_cast<std::size_t>(e.target - 1);
        const std::size_t col = static_cast<std::size_t>(e.source - 1);
        matrix[row * n + col] = s.typed() ? e.type : 1;
    }
    return matrix;
}

std::vector<std::uint8_t> skeleton_mask(const CognSkeleton& s) {
    const std::size_t n = static_cast<std::size_t>(s.n);
    std::vector<std::uint8_t> mask(n * n, 0);
    for (const SkeletonEdge& e : s.edges) {
        const std::size_t row = static_cast<std::size_t>(e.source - 1);
        const std::size_t col = static_cast<std::size_t>(e.target - 1);
        mask[row * n + col] = 1;
    }
    return mask;
}

std::string CognSkeleton::to_json() const {
    nlohmann::json out;
    out["variant"] = variant_name(variant);
    out["n"] = n;
    out["k"] = k;
    nlohmann::json edge_list = nlohmann::json::array();
    for (const SkeletonEdge& e : edges) {
        if (typed()) {
            edge_list.push_back({e.source, e.target, e.type});
        } else {
            edge_list.push_back({e.source, e.target});
        }
    }
    out["edges"] = std::move(edge_list);
    return out.dump(2);
}

std::string adjacency_csv(const CognSkeleton& s) {
    const std::vector<int> matrix = adjacency_matrix(s);
    const std::size_t n = static_cast<std::size_t>(s.n);
    std::ostringstream out;
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t col = 0; col < n; ++col) {
            if (col > 0) out << ',';
            out << matrix[row * n + col];
        }
        out << '\n';
    }
    return out.str();
}

} // namespace dialscm
