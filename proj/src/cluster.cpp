#include "crashscen/cluster.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "crashscen/error.hpp"
#include "crashscen/rng.hpp"

namespace crashscen {

namespace {

void check_weights(std::span<const double> w, std::size_t n) {
    if (w.size() != n) throw ConfigError("weights and matrix differ in size");
    for (double x : w)
        if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("weights must be positive");
}

/// Nearest and second-nearest medoid distances per observation.
struct Nearest {
    std::vector<std::size_t> cluster;
    std::vector<double> d1;
    std::vector<double> d2;
};

Nearest nearest(const DissimMatrix& d, std::span<const std::size_t> medoids) {
    const std::size_t n = d.size();
    Nearest out{std::vector<std::size_t>(n), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        double best = std::numeric_limits<double>::infinity(), second = best;
        std::size_t bc = 0;
        for (std::size_t c = 0; c < medoids.size(); ++c) {
            const double x = d(j, medoids[c]);
            if (x < best) {
                second = best;
                best = x;
                bc = c;
            } else if (x < second) {
                second = x;
            }
        }
        out.cluster[j] = bc;
        out.d1[j] = best;
        out.d2[j] = second;
    }
    return out;
}

double tolerance(double cost) { return 1e-12 * std::max(1.0, std::abs(cost)); }

/// Best-improvement SWAP to a local optimum; returns the final cost.
double swap_phase(const DissimMatrix& d, std::span<const double> w, std::vector<std::size_t>& medoids) {
    const std::size_t n = d.size();
    std::vector<char> is_medoid(n, 0);
    for (std::size_t m : medoids) is_medoid[m] = 1;
    double cost = medoid_cost(d, w, medoids);
    for (;;) {
        const Nearest nr = nearest(d, medoids);
        double best_delta = 0.0;
        std::size_t best_m = 0, best_h = 0;
        bool found = false;
        for (std::size_t mi = 0; mi < medoids.size(); ++mi) {
            for (std::size_t h = 0; h < n; ++h) {
                if (is_medoid[h]) continue;
                double delta = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = d(j, h);
                    const double now = nr.d1[j];
                    const double after = nr.cluster[j] == mi ? std::min(nr.d2[j], dh) : std::min(now, dh);
                    delta += w[j] * (after - now);
                }
                if (delta < best_delta - tolerance(cost)) {
                    best_delta = delta;
                    best_m = mi;
                    best_h = h;
                    found = true;
                }
            }
        }
        if (!found) break;
        is_medoid[medoids[best_m]] = 0;
        is_medoid[best_h] = 1;
        medoids[best_m] = best_h;
        const double next = medoid_cost(d, w, medoids);
        assert(next <= cost + tolerance(cost));
        cost = next;
    }
    return cost;
}

std::vector<std::size_t> build_phase(const DissimMatrix& d, std::span<const double> w, std::size_t k) {
    const std::size_t n = d.size();
    std::vector<std::size_t> medoids;
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<char> is_medoid(n, 0);
    for (std::size_t step = 0; step < k; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < n; ++c) {
            if (is_medoid[c]) continue;
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) total += w[j] * std::min(dist[j], d(j, c));
            if (total < best) {
                best = total;
                best_c = c;
            }
        }
        medoids.push_back(best_c);
        is_medoid[best_c] = 1;
        for (std::size_t j = 0; j < n; ++j) dist[j] = std::min(dist[j], d(j, best_c));
    }
    return medoids;
}

double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

std::vector<std::size_t> exhaustive(const DissimMatrix& d, std::span<const double> w, std::size_t k) {
    const std::size_t n = d.size();
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> best = idx;
    double best_cost = medoid_cost(d, w, idx);
    for (;;) {
        std::size_t i = k;
        while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
        if (i == 0) break;
        ++idx[i - 1];
        for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        const double c = medoid_cost(d, w, idx);
        if (c < best_cost - tolerance(best_cost)) {
            best_cost = c;
            best = idx;
        }
    }
    return best;
}

}  // namespace

double medoid_cost(const DissimMatrix& d, std::span<const double> weights, std::span<const std::size_t> medoids) {
    double total = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t m : medoids) best = std::min(best, d(j, m));
        total += weights[j] * best;
    }
    return total;
}

std::vector<std::size_t> assign_to_medoids(const DissimMatrix& d, std::span<const std::size_t> medoids) {
    std::vector<std::size_t> a(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < medoids.size(); ++c) {
            const double x = d(j, medoids[c]);
            if (x < best) {
                best = x;
                a[j] = c;
            }
        }
        // An observation that is itself a medoid belongs to its own cluster.
        for (std::size_t c = 0; c < medoids.size(); ++c)
            if (medoids[c] == j) a[j] = c;
    }
    return a;
}

Partition k_medoids(const DissimMatrix& d, std::span<const double> weights, std::size_t k, std::uint64_t seed,
                    const KMedoidsOptions& options) {
    const std::size_t n = d.size();
    if (k == 0) throw ConfigError("k must be at least 1");
    if (k > n) throw KTooLarge(k, n);
    check_weights(weights, n);

    std::vector<std::size_t> medoids;
    double cost;
    if (options.exhaustive_limit > 0 && binomial(n, k) <= static_cast<double>(options.exhaustive_limit)) {
        medoids = exhaustive(d, weights, k);
        cost = medoid_cost(d, weights, medoids);
    } else {
        medoids = build_phase(d, weights, k);
        cost = swap_phase(d, weights, medoids);
        Rng rng(derive_seed(seed, 0x9a3));
        for (std::size_t r = 0; r < options.restarts; ++r) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            for (std::size_t i = 0; i < k; ++i) std::swap(perm[i], perm[i + rng.below(n - i)]);
            std::vector<std::size_t> cand(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
            const double c = swap_phase(d, weights, cand);
            if (c < cost - tolerance(cost)) {
                cost = c;
                medoids = std::move(cand);
            }
        }
    }

    Partition p;
    p.k = k;
    p.medoids = medoids;
    for (std::size_t m : medoids) p.medoid_ids.push_back(d.ids()[m]);
    p.assignment = assign_to_medoids(d, medoids);
    p.total_cost = cost;
    return p;
}

// -- quality indices ----------------------------------------------------------

QualityIndices quality_indices(const DissimMatrix& d, std::span<const double> weights,
                               std::span<const std::size_t> assignment) {
    const std::size_t n = d.size();
    check_weights(weights, n);
    if (assignment.size() != n) throw ConfigError("assignment and matrix differ in size");
    const std::size_t k = n == 0 ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<double> cluster_w(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) cluster_w[assignment[i]] += weights[i];
    for (double cw : cluster_w)
        if (cw == 0.0) throw ConfigError("quality indices need every cluster non-empty");

    QualityIndices q;

    // Silhouette.
    double wsum = 0.0, ssum = 0.0;
    std::vector<double> s_c(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(s_c.begin(), s_c.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) s_c[assignment[j]] += weights[j] * d(i, j);
        const std::size_t own = assignment[i];
        const double own_w = cluster_w[own] - weights[i];
        double s = 0.0;
        if (own_w > 0.0 && k > 1) {
            const double a = s_c[own] / own_w;
            double b = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c)
                if (c != own) b = std::min(b, s_c[c] / cluster_w[c]);
            const double m = std::max(a, b);
            s = m > 0.0 ? (b - a) / m : 0.0;
        }
        ssum += weights[i] * s;
        wsum += weights[i];
    }
    q.asw_w = wsum > 0.0 ? ssum / wsum : 0.0;

    // Pair-level indices.
    struct Pair {
        double d;
        double w;
        bool between;
    };
    std::vector<Pair> pairs;
    pairs.reserve(d.values().size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            pairs.push_back({d(i, j), weights[i] * weights[j], assignment[i] != assignment[j]});
    if (pairs.empty()) return q;

    // Point-biserial: weighted Pearson between distance and the between-cluster indicator.
    double W = 0, md = 0, mx = 0;
    for (const auto& p : pairs) {
        W += p.w;
        md += p.w * p.d;
        mx += p.w * (p.between ? 1.0 : 0.0);
    }
    md /= W;
    mx /= W;
    double sdx = 0, sdd = 0, cov = 0;
    for (const auto& p : pairs) {
        const double dx = (p.between ? 1.0 : 0.0) - mx, dd = p.d - md;
        cov += p.w * dx * dd;
        sdx += p.w * dx * dx;
        sdd += p.w * dd * dd;
    }
    q.pbc = (sdx > 0 && sdd > 0) ? cov / std::sqrt(sdx * sdd) : 0.0;

    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });

    // Hubert's gamma over concordant / discordant (within, between) pair couples.
    double between_total = 0.0;
    for (const auto& p : pairs)
        if (p.between) between_total += p.w;
    double below = 0.0, splus = 0.0, sminus = 0.0;
    for (std::size_t g = 0; g < pairs.size();) {
        std::size_t e = g;
        double group_between = 0.0, group_within = 0.0;
        while (e < pairs.size() && pairs[e].d == pairs[g].d) {
            (pairs[e].between ? group_between : group_within) += pairs[e].w;
            ++e;
        }
        splus += group_within * (between_total - below - group_between);
        sminus += group_within * below;
        below += group_between;
        g = e;
    }
    q.hg = (splus + sminus) > 0.0 ? (splus - sminus) / (splus + sminus) : 0.0;

    // Hubert's C: within-cluster distance sum against the extreme sums of equal weight.
    double within_w = 0.0, within_sum = 0.0;
    for (const auto& p : pairs)
        if (!p.between) {
            within_w += p.w;
            within_sum += p.w * p.d;
        }
    auto extreme = [&](bool smallest) {
        double need = within_w, total = 0.0;
        for (std::size_t t = 0; t < pairs.size() && need > 0.0; ++t) {
            const Pair& p = smallest ? pairs[t] : pairs[pairs.size() - 1 - t];
            const double take = std::min(need, p.w);
            total += take * p.d;
            need -= take;
        }
        return total;
    };
    const double smin = extreme(true), smax = extreme(false);
    q.hc = smax > smin ? std::clamp((within_sum - smin) / (smax - smin), 0.0, 1.0) : 0.0;
    return q;
}

// -- sweep --------------------------------------------------------------------

QualityReport k_sweep(const DissimMatrix& d, std::span<const double> weights, std::size_t k_min, std::size_t k_max,
                      std::uint64_t seed, unsigned threads) {
    const std::size_t n = d.size();
    if (k_min < 2) throw ConfigError("sweep range must start at k >= 2");
    QualityReport rep;
    if (n < 3) return rep;
    k_max = std::min(k_max, n - 1);
    if (k_min > k_max) return rep;
    check_weights(weights, n);

    const std::size_t count = k_max - k_min + 1;
    rep.rows.resize(count);
    const unsigned nt = std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(count));
    auto work = [&](unsigned t) {
        for (std::size_t i = t; i < count; i += nt) {
            QualityRow& row = rep.rows[i];
            row.k = k_min + i;
            row.partition = k_medoids(d, weights, row.k, seed);
            row.raw = quality_indices(d, weights, row.partition.assignment);
        }
    };
    if (nt <= 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(work, t);
    }

    auto standardise = [&](double QualityIndices::*field) {
        double mean = 0.0;
        for (const auto& r : rep.rows) mean += r.raw.*field;
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (const auto& r : rep.rows) var += (r.raw.*field - mean) * (r.raw.*field - mean);
        const double sd = std::sqrt(var / static_cast<double>(count));
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            rep.degenerate = true;
            for (auto& r : rep.rows) r.z.*field = 0.0;
            return;
        }
        for (auto& r : rep.rows) r.z.*field = (r.raw.*field - mean) / sd;
    };
    standardise(&QualityIndices::asw_w);
    standardise(&QualityIndices::hg);
    standardise(&QualityIndices::pbc);
    standardise(&QualityIndices::hc);
    return rep;
}

std::size_t choose_k(const QualityReport& report) {
    if (report.rows.empty()) throw ConfigError("cannot choose k from an empty sweep");
    std::size_t best_k = report.rows.front().k;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : report.rows) {
        const double v = (r.z.asw_w + r.z.hg + r.z.pbc - r.z.hc) / 4.0;
        if (v > best + 1e-12) {
            best = v;
            best_k = r.k;
        }
    }
    return best_k;
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw ConfigError("label vectors differ in length");
    const std::size_t n = a.size();
    if (n < 2) return 1.0;
    const std::size_t ka = *std::max_element(a.begin(), a.end()) + 1;
    const std::size_t kb = *std::max_element(b.begin(), b.end()) + 1;
    std::vector<double> table(ka * kb, 0.0), ra(ka, 0.0), rb(kb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        table[a[i] * kb + b[i]] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (double x : table) sum_ij += c2(x);
    for (double x : ra) sum_a += c2(x);
    for (double x : rb) sum_b += c2(x);
    const double expected = sum_a * sum_b / c2(static_cast<double>(n));
    const double max_index = (sum_a + sum_b) / 2;
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

// -- per-configuration clustering --------------------------------------------

std::map<CrashConfig, SequenceGroup> group_sequences(std::span<const CrashSequence> seqs) {
    std::map<CrashConfig, SequenceGroup> groups;
    std::map<CrashConfig, std::map<std::string, std::size_t>> index;
    for (const auto& s : seqs) {
        if (!s.crash_config) continue;
        auto& g = groups.try_emplace(*s.crash_config, SequenceGroup{*s.crash_config, {}, {}, {}, {}}).first->second;
        std::string key = render(s);
        auto [it, fresh] = index[*s.crash_config].try_emplace(key, g.sequences.size());
        if (fresh) {
            g.sequences.push_back(std::move(key));
            g.tokens.push_back(s.tokens);
            g.weights.push_back(0.0);
            g.counts.push_back(0);
        }
        g.weights[it->second] += s.weight;
        ++g.counts[it->second];
    }
    return groups;
}

ConfigTypes cluster_group(const SequenceGroup& group, const DissimMatrix& d, std::size_t k, std::size_t k_min,
                          std::uint64_t seed) {
    const std::size_t n = group.sequences.size();
    if (n == 0) throw DataError(std::string("configuration ") + to_char(group.config) + " has no sequences");
    if (d.size() != n) throw ConfigError("distance matrix does not match the sequence group");
    ConfigTypes out;
    out.config = group.config;
    if (n < k_min) {
        out.too_small = true;
        k = 1;
    }
    k = std::clamp<std::size_t>(k, 1, n);
    Partition p = k_medoids(d, group.weights, k, seed);

    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p.medoids[a] < p.medoids[b]; });
    std::vector<std::size_t> rank(k);
    for (std::size_t r = 0; r < k; ++r) rank[order[r]] = r;
    Partition q = p;
    for (std::size_t r = 0; r < k; ++r) {
        q.medoids[r] = p.medoids[order[r]];
        q.medoid_ids[r] = p.medoid_ids[order[r]];
    }
    for (auto& a : q.assignment) a = rank[a];

    const char letter = static_cast<char>(std::tolower(static_cast<unsigned char>(to_char(group.config))));
    out.cluster_weight.assign(k, 0.0);
    out.cluster_count.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        out.cluster_weight[q.assignment[i]] += group.weights[i];
        out.cluster_count[q.assignment[i]] += group.counts[i];
        out.total_weight += group.weights[i];
    }
    for (std::size_t r = 0; r < k; ++r) out.labels.push_back(std::string(1, letter) + std::to_string(r + 1));
    out.partition = std::move(q);
    return out;
}

std::map<CrashConfig, ConfigTypes> cluster_by_config(std::span<const CrashSequence> seqs,
                                                     const std::map<CrashConfig, std::size_t>& k_per_config,
                                                     const CostScheme& costs, std::size_t default_k,
                                                     std::uint64_t seed, unsigned threads) {
    std::map<CrashConfig, ConfigTypes> out;
    for (const auto& [cfg, group] : group_sequences(seqs)) {
        auto sym = symbolize(group.tokens);
        const DissimMatrix d = distance_matrix(sym, group.sequences, costs, threads);
        auto it = k_per_config.find(cfg);
        out.emplace(cfg, cluster_group(group, d, it == k_per_config.end() ? default_k : it->second, 2, seed));
    }
    return out;
}

const std::map<CrashConfig, std::size_t>& default_types_per_config() {
    static const std::map<CrashConfig, std::size_t> k{
        {CrashConfig::D, 12}, {CrashConfig::E, 1}, {CrashConfig::F, 9}, {CrashConfig::G, 2},  {CrashConfig::H, 1},
        {CrashConfig::I, 2},  {CrashConfig::J, 3}, {CrashConfig::K, 9}, {CrashConfig::L, 14}, {CrashConfig::M, 2}};
    return k;
}

}  // namespace crashscen
