#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "attrec/attention.hpp"
#include "attrec/config.hpp"
#include "attrec/corpus.hpp"
#include "attrec/eval.hpp"
#include "attrec/model.hpp"
#include "attrec/optim.hpp"

namespace py = pybind11;
using namespace attrec;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix matrix_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 2) {
        throw std::invalid_argument("expected a 2-d float array");
    }
    Matrix m(static_cast<std::size_t>(arr.shape(0)), static_cast<std::size_t>(arr.shape(1)));
    std::memcpy(m.data(), arr.data(), m.size() * sizeof(double));
    return m;
}

py::array_t<double> array_from_matrix(const Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    std::memcpy(arr.mutable_data(), m.data(), m.size() * sizeof(double));
    return arr;
}

py::array_t<double> array_from_vector(const std::vector<double>& v) {
    py::array_t<double> arr(v.size());
    std::memcpy(arr.mutable_data(), v.data(), v.size() * sizeof(double));
    return arr;
}

// Corpus plus its leave-last-two split, the unit every python entry point
// works against.
struct Dataset {
    InteractionLog log;
    Split split;

    static Dataset from_log(InteractionLog log) {
        Dataset ds;
        ds.split = chronological_split(log);
        ds.log = std::move(log);
        return ds;
    }
};

struct PyModel {
    ModelParams params;
    std::vector<EpochRecord> trace;

    std::vector<std::uint32_t> checked_window(const std::vector<std::uint32_t>& window) const {
        for (auto item : window) {
            if (item >= params.num_items()) {
                throw std::out_of_range("window item out of range");
            }
        }
        if (window.empty()) {
            throw std::invalid_argument("window must be non-empty");
        }
        return window;
    }
};

EvalTarget target_from_string(const std::string& name) {
    if (name == "validation") return EvalTarget::Validation;
    if (name == "test") return EvalTarget::Test;
    throw std::invalid_argument("unknown target '" + name + "', expected validation or test");
}

py::dict report_to_dict(const EvalReport& report) {
    py::dict d;
    d["hr"] = report.hit_ratio;
    d["mrr"] = report.mrr;
    d["k"] = report.cutoff;
    d["ranks"] = report.ranks;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sequential recommender: metric embeddings plus self-attention over recent items";
    m.attr("__version__") = "1.0.0";

    m.def("matmul",
          [](const DoubleArray& a, const DoubleArray& b) {
              return array_from_matrix(matmul(matrix_from_array(a), matrix_from_array(b)));
          },
          py::arg("a"), py::arg("b"), "Dense double-precision matrix product");
    m.def("row_softmax",
          [](const DoubleArray& a) {
              return array_from_matrix(row_softmax(matrix_from_array(a)));
          },
          py::arg("a"), "Row-wise softmax with max-subtraction");
    m.def("relu",
          [](const DoubleArray& a) { return array_from_matrix(relu(matrix_from_array(a))); },
          py::arg("a"), "Entrywise max(x, 0)");
    m.def("time_encoding",
          [](std::size_t step, std::size_t dim) {
              return array_from_vector(time_encoding(step, dim));
          },
          py::arg("step"), py::arg("dim"),
          "Sinusoidal position code: sin on even coordinates, cos on odd");

    m.def("attend",
          [](const DoubleArray& window, const DoubleArray& query_weights,
             std::optional<DoubleArray> key_weights, bool use_time_encoding,
             const std::string& aggregation) {
              AttentionParams ap;
              ap.query_weights = matrix_from_array(query_weights);
              ap.untied_projections = key_weights.has_value();
              if (key_weights) ap.key_weights = matrix_from_array(*key_weights);
              ap.use_time_encoding = use_time_encoding;
              ap.aggregation = aggregation_from_string(aggregation);
              const AttentionOutput out = attend(matrix_from_array(window), ap);
              py::dict d;
              d["affinity"] = array_from_matrix(out.affinity);
              d["attended"] = array_from_matrix(out.attended);
              d["intent"] = array_from_vector(out.intent);
              return d;
          },
          py::arg("window"), py::arg("query_weights"), py::arg("key_weights") = py::none(),
          py::arg("use_time_encoding") = true, py::arg("aggregation") = "mean",
          "Masked self-attention over one window; values are the raw rows");

    py::class_<Dataset>(m, "Dataset",
                        "Indexed interaction corpus with its train/validation/test split")
        .def_static(
            "load_events",
            [](const std::string& path, const std::string& delimiter, bool rating_column,
               std::size_t min_actions, std::optional<double> min_rating) {
                auto events = load_raw(path, resolve_delimiter(delimiter), rating_column);
                events = to_implicit(std::move(events), min_rating);
                return Dataset::from_log(filter_and_index(events, min_actions));
            },
            py::arg("path"), py::arg("delimiter") = "tab", py::arg("rating_column") = true,
            py::arg("min_actions") = 10, py::arg("min_rating") = py::none(),
            "Parse, filter and index a raw interaction file")
        .def_static(
            "from_events",
            [](const std::vector<std::tuple<std::string, std::string, double, std::int64_t>>&
                   rows,
               std::size_t min_actions) {
                std::vector<RawEvent> events;
                events.reserve(rows.size());
                for (const auto& [user, item, rating, ts] : rows) {
                    events.push_back({user, item, rating, ts});
                }
                events = to_implicit(std::move(events));
                return Dataset::from_log(filter_and_index(events, min_actions));
            },
            py::arg("events"), py::arg("min_actions") = 3,
            "Build a corpus from (user, item, rating, timestamp) tuples")
        .def_static("load",
                    [](const std::string& path) { return Dataset::from_log(load_log(path)); },
                    py::arg("path"), "Read a prepared corpus written by save()")
        .def("save", [](const Dataset& ds, const std::string& path) { save_log(ds.log, path); },
             py::arg("path"))
        .def_property_readonly("num_users", [](const Dataset& ds) { return ds.log.num_users(); })
        .def_property_readonly("num_items", [](const Dataset& ds) { return ds.log.num_items(); })
        .def_property_readonly("num_interactions",
                               [](const Dataset& ds) { return ds.log.num_interactions(); })
        .def_property_readonly("user_ids", [](const Dataset& ds) { return ds.log.user_ids; })
        .def_property_readonly("item_ids", [](const Dataset& ds) { return ds.log.item_ids; })
        .def("train_sequence",
             [](const Dataset& ds, std::size_t user) {
                 if (user >= ds.split.train.size()) throw std::out_of_range("user");
                 return ds.split.train[user];
             },
             py::arg("user"))
        .def("validation_target",
             [](const Dataset& ds, std::size_t user) {
                 if (user >= ds.split.validation_target.size()) throw std::out_of_range("user");
                 return ds.split.validation_target[user];
             },
             py::arg("user"))
        .def("test_target", [](const Dataset& ds, std::size_t user) {
            if (user >= ds.split.test_target.size()) throw std::out_of_range("user");
            return ds.split.test_target[user];
        }, py::arg("user"));

    py::class_<TrainConfig>(m, "TrainOptions", "Knobs for train(); mirrors the CLI flags")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("window_len", &TrainConfig::window_len)
        .def_readwrite("num_targets", &TrainConfig::num_targets)
        .def_readwrite("dim", &TrainConfig::dim)
        .def_readwrite("omega", &TrainConfig::omega)
        .def_readwrite("margin", &TrainConfig::margin)
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("clip_norms", &TrainConfig::clip_embedding_norms)
        .def_readwrite("time_encoding", &TrainConfig::use_time_encoding)
        .def_readwrite("untied_projections", &TrainConfig::untied_projections)
        .def_readwrite("attention", &TrainConfig::attention_enabled)
        .def_readwrite("exclude_history_negatives", &TrainConfig::negatives_exclude_history)
        .def_readwrite("threads", &TrainConfig::eval_threads)
        .def_property(
            "aggregation",
            [](const TrainConfig& tc) { return std::string(to_string(tc.aggregation)); },
            [](TrainConfig& tc, const std::string& name) {
                tc.aggregation = aggregation_from_string(name);
            });

    py::class_<PyModel>(m, "Model", "Trained parameters plus the per-epoch trace")
        .def_property_readonly("dim", [](const PyModel& m_) { return m_.params.dim(); })
        .def_property_readonly("num_users",
                               [](const PyModel& m_) { return m_.params.num_users(); })
        .def_property_readonly("num_items",
                               [](const PyModel& m_) { return m_.params.num_items(); })
        .def_property_readonly("omega", [](const PyModel& m_) { return m_.params.omega; })
        .def_property_readonly("window_len",
                               [](const PyModel& m_) { return m_.params.window_len; })
        .def_property_readonly("trace",
                               [](const PyModel& m_) {
                                   py::list out;
                                   for (const auto& rec : m_.trace) {
                                       out.append(py::make_tuple(rec.epoch, rec.mean_loss,
                                                                 rec.val_hr, rec.val_mrr));
                                   }
                                   return out;
                               })
        .def("intent",
             [](const PyModel& m_, const std::vector<std::uint32_t>& window) {
                 return array_from_vector(
                     compute_intent(m_.params, m_.checked_window(window)).intent);
             },
             py::arg("window"), "Short-term intent vector for a window of item indices")
        .def("attention_map",
             [](const PyModel& m_, const std::vector<std::uint32_t>& window) {
                 if (!m_.params.attention_enabled) {
                     throw std::invalid_argument("model was trained with attention disabled");
                 }
                 const Matrix win =
                     gather_rows(m_.params.item_short, m_.checked_window(window));
                 return array_from_matrix(attend(win, m_.params.attention).affinity);
             },
             py::arg("window"), "Row-stochastic affinity matrix for a window")
        .def("score",
             [](const PyModel& m_, std::uint32_t user, std::uint32_t item,
                const std::vector<std::uint32_t>& window) {
                 const auto intent = compute_intent(m_.params, m_.checked_window(window)).intent;
                 return score_item(m_.params, user, item, intent);
             },
             py::arg("user"), py::arg("item"), py::arg("window"),
             "Preference distance, smaller is better")
        .def("evaluate",
             [](const PyModel& m_, const Dataset& ds, std::size_t k, const std::string& policy,
                const std::string& target, std::size_t threads) {
                 EvalReport report;
                 {
                     py::gil_scoped_release release;
                     report = evaluate(m_.params, ds.split, k,
                                       candidate_policy_from_string(policy),
                                       target_from_string(target), threads);
                 }
                 return report_to_dict(report);
             },
             py::arg("dataset"), py::arg("k") = 50, py::arg("policy") = "exclude-seen",
             py::arg("target") = "test", py::arg("threads") = 1,
             "Rank every user's held-out item; returns hr, mrr and per-user ranks")
        .def("save",
             [](const PyModel& m_, const std::string& path) {
                 save_checkpoint({m_.params, ""}, path);
             },
             py::arg("path"))
        .def_static("load", [](const std::string& path) {
            PyModel m_;
            m_.params = load_checkpoint(path).params;
            return m_;
        }, py::arg("path"));

    m.def("train",
          [](const Dataset& ds, const TrainConfig& options) {
              TrainResult result;
              {
                  py::gil_scoped_release release;
                  result = train(ds.log, ds.split, options);
              }
              PyModel m_;
              m_.params = std::move(result.params);
              m_.trace = std::move(result.trace);
              return m_;
          },
          py::arg("dataset"), py::arg("options") = TrainConfig(),
          "Run the full training loop; returns the best-validation model");

    m.def("popularity",
          [](const Dataset& ds, std::size_t k, const std::string& policy,
             const std::string& target) {
              return report_to_dict(evaluate_popularity(ds.split, ds.log.num_items(), k,
                                                        candidate_policy_from_string(policy),
                                                        target_from_string(target)));
          },
          py::arg("dataset"), py::arg("k") = 50, py::arg("policy") = "exclude-seen",
          py::arg("target") = "test", "Most-popular baseline metrics");

    m.def("hit_ratio_at",
          [](const std::vector<std::uint32_t>& ranks, std::size_t k) {
              return hit_ratio_at(ranks, k);
          },
          py::arg("ranks"), py::arg("k"));
    m.def("mean_reciprocal_rank",
          [](const std::vector<std::uint32_t>& ranks) { return mean_reciprocal_rank(ranks); },
          py::arg("ranks"));
}
