#include "geos/permset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "geos/errors.hpp"
#include "geos/rng.hpp"

namespace geos::perms {

bool Permutation::is_bijection() const {
    std::vector<bool> seen(mapping.size(), false);
    for (int v : mapping) {
        if (v < 0 || v >= n() || seen[static_cast<size_t>(v)]) return false;
        seen[static_cast<size_t>(v)] = true;
    }
    return true;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.mapping.resize(mapping.size());
    for (int i = 0; i < n(); ++i) inv.mapping[static_cast<size_t>(mapping[i])] = i;
    return inv;
}

Permutation Permutation::identity(int n) {
    Permutation p;
    p.mapping.resize(static_cast<size_t>(n));
    std::iota(p.mapping.begin(), p.mapping.end(), 0);
    return p;
}

int hamming(const Permutation& a, const Permutation& b) {
    if (a.n() != b.n())
        throw InvalidPairError("hamming: size mismatch " + std::to_string(a.n()) + " vs " +
                               std::to_string(b.n()));
    int d = 0;
    for (int i = 0; i < a.n(); ++i) d += a.mapping[i] != b.mapping[i];
    return d;
}

int PermutationSet::find(const Permutation& p) const {
    for (int i = 0; i < size(); ++i)
        if (permutations[static_cast<size_t>(i)] == p) return i;
    return -1;
}

uint64_t factorial_saturated(int n) {
    uint64_t f = 1;
    for (int i = 2; i <= n; ++i) {
        if (f > std::numeric_limits<uint64_t>::max() / static_cast<uint64_t>(i))
            return std::numeric_limits<uint64_t>::max();
        f *= static_cast<uint64_t>(i);
    }
    return f;
}

int brute_force_min_hamming(const std::vector<Permutation>& ps) {
    if (ps.size() < 2) return 0;
    int best = std::numeric_limits<int>::max();
    for (size_t i = 0; i < ps.size(); ++i)
        for (size_t j = i + 1; j < ps.size(); ++j) best = std::min(best, hamming(ps[i], ps[j]));
    return best;
}

namespace {

constexpr uint64_t kExhaustivePoolLimit = 1000000;
constexpr int kSampledPoolSize = 100000;

Permutation random_permutation(int n, Rng& rng) {
    Permutation p = Permutation::identity(n);
    rng.shuffle(p.mapping);
    return p;
}

// Tie-break key: the candidate seen from the starting permutation's frame,
// (start⁻¹ ∘ c). Comparing these instead of raw mappings makes the whole
// greedy path equivariant under relabeling, so its min-distance profile is
// seed-independent.
std::vector<int> relative_key(const Permutation& c, const Permutation& start_inv) {
    std::vector<int> k(c.mapping.size());
    for (size_t i = 0; i < k.size(); ++i)
        k[i] = start_inv.mapping[static_cast<size_t>(c.mapping[i])];
    return k;
}

size_t argmax_min_distance(const std::vector<Permutation>& pool, const std::vector<int>& mindist,
                           const Permutation& start_inv) {
    size_t best = 0;
    std::vector<int> best_key = relative_key(pool[0], start_inv);
    for (size_t i = 1; i < pool.size(); ++i) {
        if (mindist[i] < mindist[best]) continue;
        std::vector<int> key = relative_key(pool[i], start_inv);
        if (mindist[i] > mindist[best] || key < best_key) {
            best = i;
            best_key = std::move(key);
        }
    }
    return best;
}

}  // namespace

PermutationSet generate(int n, int set_size, uint64_t seed) {
    if (n < 2) throw InvalidGridError("invalid grid: need at least 2 tiles, got " + std::to_string(n));
    const uint64_t nfact = factorial_saturated(n);
    if (set_size < 1 || static_cast<uint64_t>(set_size) > nfact) {
        std::ostringstream os;
        os << "infeasible: " << set_size << " > " << n << "! = " << nfact;
        throw InfeasibleSetError(os.str());
    }

    PermutationSet out;
    out.n = n;
    out.seed = seed;
    Rng rng(derive_seed(seed, "permset.generate"));
    out.permutations.push_back(random_permutation(n, rng));
    const Permutation start_inv = out.permutations.front().inverse();

    if (nfact <= kExhaustivePoolLimit) {
        std::vector<Permutation> pool;
        pool.reserve(static_cast<size_t>(nfact));
        Permutation p = Permutation::identity(n);
        do {
            pool.push_back(p);
        } while (std::next_permutation(p.mapping.begin(), p.mapping.end()));

        std::vector<int> mindist(pool.size(), std::numeric_limits<int>::max());
        while (out.size() < set_size) {
            const Permutation& latest = out.permutations.back();
            const int64_t m = static_cast<int64_t>(pool.size());
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) {
                const int d = hamming(pool[static_cast<size_t>(i)], latest);
                if (d < mindist[static_cast<size_t>(i)]) mindist[static_cast<size_t>(i)] = d;
            }
            const size_t pick = argmax_min_distance(pool, mindist, start_inv);
            if (mindist[pick] == 0) throw InfeasibleSetError("candidate pool exhausted");
            out.permutations.push_back(pool[pick]);
        }
    } else {
        while (out.size() < set_size) {
            std::vector<Permutation> pool;
            pool.reserve(kSampledPoolSize);
            for (int i = 0; i < kSampledPoolSize; ++i) pool.push_back(random_permutation(n, rng));
            std::vector<int> mindist(pool.size(), std::numeric_limits<int>::max());
            const int64_t m = static_cast<int64_t>(pool.size());
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) {
                for (const Permutation& sel : out.permutations) {
                    const int d = hamming(pool[static_cast<size_t>(i)], sel);
                    if (d < mindist[static_cast<size_t>(i)]) mindist[static_cast<size_t>(i)] = d;
                }
            }
            const size_t pick = argmax_min_distance(pool, mindist, start_inv);
            if (mindist[pick] == 0) throw InfeasibleSetError("sampled candidate pool exhausted");
            out.permutations.push_back(pool[pick]);
        }
    }

    out.min_pairwise_hamming = brute_force_min_hamming(out.permutations);
    return out;
}

void save(const PermutationSet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path.string());
    out << "n=" << set.n << " V=" << set.size() << " seed=" << set.seed << "\n";
    for (const Permutation& p : set.permutations) {
        for (int i = 0; i < p.n(); ++i) {
            if (i) out << ' ';
            out << p.mapping[static_cast<size_t>(i)];
        }
        out << "\n";
    }
    if (!out) throw IngestionError("write failed: " + path.string());
}

PermutationSet load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw ParseError(path.string() + ": line 1: missing header");

    PermutationSet set;
    int v = -1;
    {
        int n = -1;
        long long seed = -1;
        if (std::sscanf(header.c_str(), "n=%d V=%d seed=%lld", &n, &v, &seed) != 3 || n < 2 ||
            v < 1 || seed < 0)
            throw ParseError(path.string() + ": line 1: malformed header '" + header + "'");
        set.n = n;
        set.seed = static_cast<uint64_t>(seed);
    }

    std::set<std::vector<int>> seen;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Permutation p;
        int x;
        while (ls >> x) p.mapping.push_back(x);
        if (p.n() != set.n)
            throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": expected " +
                             std::to_string(set.n) + " indices, got " + std::to_string(p.n()));
        if (!p.is_bijection())
            throw ParseError(path.string() + ": line " + std::to_string(lineno) +
                             ": not a permutation of 0.." + std::to_string(set.n - 1));
        if (!seen.insert(p.mapping).second)
            throw ParseError(path.string() + ": line " + std::to_string(lineno) +
                             ": duplicate permutation");
        set.permutations.push_back(std::move(p));
    }
    if (set.size() != v)
        throw ParseError(path.string() + ": header declares V=" + std::to_string(v) + " but " +
                         std::to_string(set.size()) + " rows present");
    set.min_pairwise_hamming = brute_force_min_hamming(set.permutations);
    return set;
}

}  // namespace geos::perms
