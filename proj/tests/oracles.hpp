#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "crashscen/bayesnet.hpp"
#include "crashscen/rng.hpp"
#include "crashscen/seqdist.hpp"

namespace oracle {

/// Edit distance by direct recursion on prefixes (memoised on the prefix pair).
inline double edit_distance(const std::string& a, const std::string& b, double indel, double sub) {
    std::map<std::pair<std::size_t, std::size_t>, double> memo;
    std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> double {
        if (i == 0) return indel * static_cast<double>(j);
        if (j == 0) return indel * static_cast<double>(i);
        auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        double best = rec(i - 1, j) + indel;
        best = std::min(best, rec(i, j - 1) + indel);
        best = std::min(best, rec(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0.0 : sub));
        memo[key] = best;
        return best;
    };
    return rec(a.size(), b.size());
}

/// Random symmetric matrix with positive off-diagonal entries.
inline crashscen::DissimMatrix random_matrix(crashscen::Rng& rng, std::size_t n, bool integer_values) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    crashscen::DissimMatrix d(ids);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d.set(i, j, integer_values ? static_cast<double>(1 + rng.below(6)) : 0.05 + rng.uniform());
    return d;
}

/// Minimum weighted cost over every medoid subset of size k.
inline double best_medoid_cost(const crashscen::DissimMatrix& d, const std::vector<double>& w, std::size_t k) {
    const std::size_t n = d.size();
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> pick(n, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(k), true);
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j)
                if (pick[j]) m = std::min(m, d(i, j));
            cost += w[i] * m;
        }
        best = std::min(best, cost);
    } while (std::prev_permutation(pick.begin(), pick.end()));
    return best;
}

struct Indices {
    double asw_w, hg, pbc, hc;
};

/// Quality indices straight from their definitions, O(P^2) in the pair count.
inline Indices quality(const crashscen::DissimMatrix& d, const std::vector<double>& w,
                       const std::vector<std::size_t>& cl) {
    const std::size_t n = d.size();
    std::size_t k = 0;
    for (auto c : cl) k = std::max(k, c + 1);
    Indices out{};

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        double a_num = 0.0, a_den = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && cl[j] == cl[i]) {
                a_num += w[j] * d(i, j);
                a_den += w[j];
            }
        if (a_den > 0.0 && k > 1) {
            const double a = a_num / a_den;
            double b = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                if (c == cl[i]) continue;
                double bn = 0.0, bd = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (cl[j] == c) {
                        bn += w[j] * d(i, j);
                        bd += w[j];
                    }
                if (bd > 0.0) b = std::min(b, bn / bd);
            }
            s = (b - a) / std::max(a, b);
        }
        num += w[i] * s;
        den += w[i];
    }
    out.asw_w = num / den;

    struct P {
        double d, w;
        int between;
    };
    std::vector<P> ps;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) ps.push_back({d(i, j), w[i] * w[j], cl[i] != cl[j] ? 1 : 0});

    double W = 0, sd = 0, sx = 0;
    for (auto& p : ps) {
        W += p.w;
        sd += p.w * p.d;
        sx += p.w * p.between;
    }
    const double md = sd / W, mx = sx / W;
    double cov = 0, vd = 0, vx = 0;
    for (auto& p : ps) {
        cov += p.w * (p.d - md) * (p.between - mx);
        vd += p.w * (p.d - md) * (p.d - md);
        vx += p.w * (p.between - mx) * (p.between - mx);
    }
    out.pbc = (vd > 0 && vx > 0) ? cov / std::sqrt(vd * vx) : 0.0;

    double plus = 0, minus = 0;
    for (auto& p : ps)
        for (auto& q : ps)
            if (!p.between && q.between) {
                if (p.d < q.d) plus += p.w * q.w;
                if (p.d > q.d) minus += p.w * q.w;
            }
    out.hg = plus + minus > 0 ? (plus - minus) / (plus + minus) : 0.0;

    double ww = 0, sw = 0;
    for (auto& p : ps)
        if (!p.between) {
            ww += p.w;
            sw += p.w * p.d;
        }
    // Expand pairs into unit-weight slices by sorting and greedy fill.
    auto fill = [&](bool ascending) {
        std::vector<P> s = ps;
        std::sort(s.begin(), s.end(), [&](const P& x, const P& y) { return ascending ? x.d < y.d : x.d > y.d; });
        double left = ww, tot = 0;
        for (auto& p : s) {
            if (left <= 0) break;
            const double t = std::min(left, p.w);
            tot += t * p.d;
            left -= t;
        }
        return tot;
    };
    const double lo = fill(true), hi = fill(false);
    out.hc = hi > lo ? (sw - lo) / (hi - lo) : 0.0;
    return out;
}

/// All full assignments of a network in mixed radix (last node fastest).
inline void for_each_assignment(const crashscen::BayesNet& net,
                                const std::function<void(const std::vector<std::uint16_t>&)>& f) {
    const std::size_t n = net.size();
    std::vector<std::uint16_t> a(n, 0);
    for (;;) {
        f(a);
        std::size_t v = n;
        while (v > 0) {
            --v;
            if (++a[v] < net.variables()[v].levels.size()) break;
            a[v] = 0;
            if (v == 0) return;
        }
        if (n == 0) return;
    }
}

/// Product of CPT entries read directly from the tables.
inline double chain_rule(const crashscen::BayesNet& net, const std::vector<std::uint16_t>& a) {
    double p = 1.0;
    for (const auto& cpt : net.cpts()) {
        std::size_t row = 0;
        for (auto par : cpt.parents) row = row * net.variables()[par].levels.size() + a[par];
        p *= cpt.probs[row * cpt.levels + a[cpt.node]];
    }
    return p;
}

/// Random network: arcs only from lower to higher index, Dirichlet-ish CPT rows.
inline crashscen::BayesNet random_network(crashscen::Rng& rng, std::size_t nodes, std::size_t max_levels,
                                          double arc_prob = 0.5) {
    std::vector<crashscen::Variable> vars;
    for (std::size_t v = 0; v < nodes; ++v) {
        crashscen::Variable x{"X" + std::to_string(v), {}};
        const std::size_t lv = 2 + rng.below(max_levels - 1);
        for (std::size_t l = 0; l < lv; ++l) x.levels.push_back("l" + std::to_string(l));
        vars.push_back(std::move(x));
    }
    crashscen::Dag dag(nodes);
    for (std::size_t c = 0; c < nodes; ++c)
        for (std::size_t p = 0; p < c; ++p)
            if (rng.uniform() < arc_prob) dag.add_arc(p, c);
    std::vector<crashscen::Cpt> cpts;
    for (std::size_t v = 0; v < nodes; ++v) {
        crashscen::Cpt cpt;
        cpt.node = v;
        cpt.parents = dag.parents(v);
        cpt.levels = vars[v].levels.size();
        std::size_t rows = 1;
        for (auto p : cpt.parents) rows *= vars[p].levels.size();
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<double> row(cpt.levels);
            double s = 0;
            for (auto& x : row) s += (x = 0.05 + rng.uniform());
            for (auto& x : row) cpt.probs.push_back(x / s);
        }
        cpts.push_back(std::move(cpt));
    }
    return crashscen::BayesNet(std::move(vars), std::move(dag), std::move(cpts));
}

/// Exact P(targets | evidence) by enumeration; evidence maps node -> level index.
inline std::vector<double> exact_posterior(const crashscen::BayesNet& net,
                                           const std::map<std::size_t, std::uint16_t>& evidence,
                                           const std::vector<std::size_t>& targets, double* p_evidence = nullptr) {
    std::size_t cells = 1;
    for (auto t : targets) cells *= net.variables()[t].levels.size();
    std::vector<double> out(cells, 0.0);
    double z = 0.0;
    for_each_assignment(net, [&](const std::vector<std::uint16_t>& a) {
        for (const auto& [v, l] : evidence)
            if (a[v] != l) return;
        const double p = chain_rule(net, a);
        std::size_t cell = 0;
        for (auto t : targets) cell = cell * net.variables()[t].levels.size() + a[t];
        out[cell] += p;
        z += p;
    });
    for (auto& x : out) x /= z;
    if (p_evidence) *p_evidence = z;
    return out;
}

/// Adjusted Rand index from the contingency table.
inline double ari(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::map<std::pair<std::size_t, std::size_t>, double> nij;
    std::map<std::size_t, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sij = 0, sa = 0, sb = 0;
    for (auto& [k, v] : nij) sij += c2(v);
    for (auto& [k, v] : ai) sa += c2(v);
    for (auto& [k, v] : bj) sb += c2(v);
    const double n2 = c2(static_cast<double>(a.size()));
    const double expected = sa * sb / n2;
    const double maxi = (sa + sb) / 2;
    if (maxi == expected) return 1.0;
    return (sij - expected) / (maxi - expected);
}

}  // namespace oracle
