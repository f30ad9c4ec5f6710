#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "crashscen/bayesnet.hpp"
#include "crashscen/cluster.hpp"
#include "crashscen/error.hpp"
#include "crashscen/event_codec.hpp"
#include "crashscen/inference.hpp"
#include "crashscen/pipeline.hpp"
#include "crashscen/seqdist.hpp"

namespace py = pybind11;
using namespace crashscen;

namespace {

using Matrix = py::array_t<double, py::array::c_style | py::array::forcecast>;

DissimMatrix to_dissim(const Matrix& m) {
    if (m.ndim() != 2 || m.shape(0) != m.shape(1)) throw ConfigError("distance matrix must be square");
    const auto n = static_cast<std::size_t>(m.shape(0));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    DissimMatrix d(ids);
    auto r = m.unchecked<2>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d.set(i, j, r(i, j));
    return d;
}

Matrix to_array(const DissimMatrix& d) {
    const auto n = static_cast<py::ssize_t>(d.size());
    Matrix out({n, n});
    auto w = out.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < n; ++i)
        for (py::ssize_t j = 0; j < n; ++j) w(i, j) = d(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    return out;
}

std::vector<double> weights_or_ones(const std::optional<std::vector<double>>& w, std::size_t n) {
    return w ? *w : std::vector<double>(n, 1.0);
}

py::dict quality_dict(const QualityIndices& q) {
    py::dict d;
    d["asw_w"] = q.asw_w;
    d["hg"] = q.hg;
    d["pbc"] = q.pbc;
    d["hc"] = q.hc;
    return d;
}

py::dict partition_dict(const Partition& p) {
    py::dict d;
    d["k"] = p.k;
    d["medoids"] = p.medoids;
    d["assignment"] = p.assignment;
    d["total_cost"] = p.total_cost;
    return d;
}

Dataset make_dataset(const std::map<std::string, std::vector<std::string>>& columns,
                     const std::optional<std::vector<double>>& weights) {
    if (columns.empty()) throw ConfigError("no columns");
    const std::size_t n = columns.begin()->second.size();
    std::vector<Variable> vars;
    for (const auto& [name, values] : columns) {
        if (values.size() != n) throw ConfigError("column " + name + " has a different length");
        Variable v{name, {}};
        for (const auto& x : values)
            if (std::find(v.levels.begin(), v.levels.end(), x) == v.levels.end()) v.levels.push_back(x);
        std::sort(v.levels.begin(), v.levels.end());
        vars.push_back(std::move(v));
    }
    Dataset data(vars);
    const auto w = weights_or_ones(weights, n);
    if (w.size() != n) throw ConfigError("weights length differs from the columns");
    std::vector<std::string> row(vars.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (const auto& [name, values] : columns) row[c++] = values[i];
        data.add_record(row, w[i]);
    }
    return data;
}

using ArcList = std::vector<std::pair<std::string, std::string>>;

py::dict learn(const std::map<std::string, std::vector<std::string>>& columns,
               const std::optional<std::vector<double>>& weights, double penalty, const ArcList& forbid,
               const ArcList& force, std::size_t restarts, std::uint64_t seed, double alpha) {
    const Dataset data = make_dataset(columns, weights);
    ScoreConfig sc;
    sc.penalty = penalty;
    ArcConstraints cons{force, forbid};
    HillClimbOptions opt;
    opt.restarts = restarts;
    opt.seed = seed;
    const LearnResult r = hill_climb(data, sc, cons, opt);
    py::list arcs;
    for (const auto& [p, c] : r.dag.arcs())
        arcs.append(py::make_tuple(data.variables()[p].name, data.variables()[c].name));
    py::list strengths;
    for (const auto& s : arc_strength(r.dag, data, sc)) strengths.append(py::make_tuple(s.parent, s.child, s.strength));
    py::dict out;
    out["arcs"] = arcs;
    out["strengths"] = strengths;
    out["loglik"] = r.fit.loglik;
    out["params"] = r.fit.k;
    out["score"] = r.fit.aic;
    out["network_json"] = network_to_json(fit_parameters(r.dag, data, alpha));
    return out;
}

py::dict run_query(const std::string& network_json, const std::map<std::string, std::string>& evidence,
                   const std::vector<std::string>& targets, std::size_t replications, std::size_t samples,
                   double scale, std::uint64_t seed, unsigned threads) {
    const BayesNet net = network_from_json(network_json);
    Query q;
    q.evidence = evidence;
    q.targets = targets;
    q.replications = replications;
    q.samples = samples;
    q.scale = scale;
    q.seed = seed;
    QueryResult r;
    {
        py::gil_scoped_release release;
        r = query(net, q, threads);
    }
    py::list cells;
    for (const auto& c : r.cells) {
        py::dict d;
        d["levels"] = c.levels;
        d["probability"] = c.probability;
        d["joint_mean"] = c.joint_mean;
        d["joint_sd"] = c.joint_sd;
        d["conditional_mean"] = c.conditional_mean;
        d["conditional_sd"] = c.conditional_sd;
        cells.append(d);
    }
    py::dict out;
    out["cells"] = cells;
    out["evidence_probability"] = r.evidence_probability;
    out["mean_ess"] = r.mean_ess;
    out["replications_used"] = r.replications_used;
    out["csv"] = query_to_csv(r);
    return out;
}

PipelineConfig make_config(const std::map<std::string, std::string>& settings) {
    PipelineConfig cfg;
    for (const auto& [k, v] : settings) cfg.set(k, v);
    return cfg;
}

py::object summaries_to_py(const std::vector<StageSummary>& s) {
    const auto json = py::module_::import("json");
    return json.attr("loads")(summary_json(s, 0));
}

}  // namespace

PYBIND11_MODULE(_crashscen, m) {
    m.doc() = "Crash sequence scenario mining";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def(
        "parse_sequence", [](const std::string& text) {
            std::vector<std::string> out;
            for (const auto& t : parse_tokens(text)) out.push_back(t.rendered());
            return out;
        },
        py::arg("text"), "Tokens of a hyphen-joined sequence.");

    m.def(
        "align_cost",
        [](const std::string& a, const std::string& b, double indel, double substitution) {
            CostScheme c{indel, substitution};
            c.validate();
            const auto ta = parse_tokens(a), tb = parse_tokens(b);
            return align_cost(ta, tb, c);
        },
        py::arg("a"), py::arg("b"), py::arg("indel") = 1.0, py::arg("substitution") = 1.0,
        "Edit distance between two rendered sequences.");

    m.def(
        "distance_matrix",
        [](const std::vector<std::string>& sequences, double indel, double substitution, unsigned threads) {
            CostScheme c{indel, substitution};
            c.validate();
            std::vector<CrashSequence> seqs;
            for (std::size_t i = 0; i < sequences.size(); ++i) {
                seqs.push_back(parse_sequence(sequences[i]));
                seqs.back().crash_id = std::to_string(i);
            }
            DissimMatrix d;
            {
                py::gil_scoped_release release;
                d = distance_matrix(seqs, c, threads);
            }
            return to_array(d);
        },
        py::arg("sequences"), py::arg("indel") = 1.0, py::arg("substitution") = 1.0, py::arg("threads") = 0,
        "Pairwise edit distances as a square array.");

    m.def(
        "k_medoids",
        [](const Matrix& d, std::size_t k, std::optional<std::vector<double>> weights, std::uint64_t seed,
           std::size_t exhaustive_limit) {
            const DissimMatrix dm = to_dissim(d);
            const auto w = weights_or_ones(weights, dm.size());
            KMedoidsOptions opt;
            opt.exhaustive_limit = exhaustive_limit;
            return partition_dict(k_medoids(dm, w, k, seed, opt));
        },
        py::arg("d"), py::arg("k"), py::arg("weights") = py::none(), py::arg("seed") = 0,
        py::arg("exhaustive_limit") = KMedoidsOptions{}.exhaustive_limit, "Weighted partitioning around medoids.");

    m.def(
        "quality_indices",
        [](const Matrix& d, const std::vector<std::size_t>& assignment, std::optional<std::vector<double>> weights) {
            const DissimMatrix dm = to_dissim(d);
            const auto w = weights_or_ones(weights, dm.size());
            return quality_dict(quality_indices(dm, w, assignment));
        },
        py::arg("d"), py::arg("assignment"), py::arg("weights") = py::none(),
        "Weighted silhouette, Hubert's gamma, point-biserial correlation and Hubert's C.");

    m.def(
        "k_sweep",
        [](const Matrix& d, std::size_t k_min, std::size_t k_max, std::optional<std::vector<double>> weights,
           std::uint64_t seed) {
            const DissimMatrix dm = to_dissim(d);
            const auto w = weights_or_ones(weights, dm.size());
            const QualityReport rep = k_sweep(dm, w, k_min, k_max, seed);
            py::list rows;
            for (const auto& r : rep.rows) {
                py::dict row;
                row["k"] = r.k;
                row["raw"] = quality_dict(r.raw);
                row["z"] = quality_dict(r.z);
                row["partition"] = partition_dict(r.partition);
                rows.append(row);
            }
            py::dict out;
            out["rows"] = rows;
            out["degenerate"] = rep.degenerate;
            out["chosen_k"] = choose_k(rep);
            return out;
        },
        py::arg("d"), py::arg("k_min"), py::arg("k_max"), py::arg("weights") = py::none(), py::arg("seed") = 0,
        "Quality indices over a range of k with z-scores.");

    m.def(
        "score",
        [](const std::map<std::string, std::vector<std::string>>& columns, const ArcList& arcs,
           std::optional<std::vector<double>> weights, double penalty) {
            const Dataset data = make_dataset(columns, weights);
            Dag g(data.num_variables());
            for (const auto& [p, c] : arcs) g.add_arc(data.index(p), data.index(c));
            const FitReport f = score(g, data, ScoreConfig{penalty, 0.0});
            return py::make_tuple(f.loglik, f.k, f.aic);
        },
        py::arg("columns"), py::arg("arcs"), py::arg("weights") = py::none(), py::arg("penalty") = 2.0,
        "(loglik, params, score) of a graph over categorical columns.");

    m.def("hill_climb", &learn, py::arg("columns"), py::arg("weights") = py::none(), py::arg("penalty") = 2.0,
          py::arg("forbid") = ArcList{}, py::arg("force") = ArcList{}, py::arg("restarts") = 0, py::arg("seed") = 0,
          py::arg("alpha") = 1e-3, "Structure search, arc strengths and a fitted network.");

    m.def("query", &run_query, py::arg("network_json"), py::arg("evidence"), py::arg("targets"),
          py::arg("replications") = 1000, py::arg("samples") = 10000, py::arg("scale") = 1.0, py::arg("seed") = 0,
          py::arg("threads") = 0, "Likelihood-weighting query on a network JSON document.");

    m.def("pipeline_stages", &pipeline_stages);

    m.def(
        "run_stage",
        [](const std::string& stage, const std::map<std::string, std::string>& settings) {
            const PipelineConfig cfg = make_config(settings);
            std::vector<StageSummary> s;
            {
                py::gil_scoped_release release;
                s.push_back(run_stage(stage, cfg));
            }
            return summaries_to_py(s);
        },
        py::arg("stage"), py::arg("settings") = std::map<std::string, std::string>{},
        "Runs one pipeline stage; settings use the config file keys.");

    m.def(
        "run_all",
        [](const std::map<std::string, std::string>& settings, bool synth) {
            const PipelineConfig cfg = make_config(settings);
            std::vector<StageSummary> s;
            {
                py::gil_scoped_release release;
                s = run_all(cfg, synth);
            }
            return summaries_to_py(s);
        },
        py::arg("settings") = std::map<std::string, std::string>{}, py::arg("synth") = false,
        "Runs every stage in order.");
}
