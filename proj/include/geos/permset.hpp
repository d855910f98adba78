#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace geos::perms {

// A tile-position mapping: output grid cell i takes source tile mapping[i].
struct Permutation {
    std::vector<int> mapping;

    int n() const { return static_cast<int>(mapping.size()); }
    bool is_bijection() const;
    bool operator==(const Permutation&) const = default;
    bool operator<(const Permutation& o) const { return mapping < o.mapping; }

    Permutation inverse() const;
    static Permutation identity(int n);
};

int hamming(const Permutation& a, const Permutation& b);

struct PermutationSet {
    int n = 0;
    uint64_t seed = 0;
    std::vector<Permutation> permutations;
    int min_pairwise_hamming = 0;  // cached; equals brute-force pair scan

    int size() const { return static_cast<int>(permutations.size()); }
    // Index of a permutation in the set, or -1.
    int find(const Permutation& p) const;
    bool operator==(const PermutationSet&) const = default;
};

// Greedy max-min Hamming selection: seeded random start, then at each step the
// candidate maximizing the minimum distance to the selected prefix. Ties go to
// the candidate whose composition with the inverse of the starting permutation
// is lexicographically smallest; that makes the selection equivariant under
// tile relabeling, so every seed follows the same distance profile and reaches
// the exhaustive-subset optimum for small n (an absolute lexicographic
// tie-break does not: most seeds then build a transversal-free Latin square in
// the first n picks and stall below the optimum). The candidate pool is
// exhaustive when n! <= 10^6 and a seeded random sample of 10^5 fresh
// candidates per step otherwise. Deterministic given (n, set_size, seed).
PermutationSet generate(int n, int set_size, uint64_t seed);

// Recomputes the minimum over all pairs, O(V^2 n).
int brute_force_min_hamming(const std::vector<Permutation>& ps);

// Text format: header "n=<n> V=<V> seed=<seed>", then V rows of n indices.
void save(const PermutationSet& set, const std::filesystem::path& path);
PermutationSet load(const std::filesystem::path& path);

// n! saturated at uint64 max.
uint64_t factorial_saturated(int n);

}  // namespace geos::perms
