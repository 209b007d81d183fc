#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "segrl/config.hpp"
#include "segrl/corpus.hpp"
#include "segrl/evaluate.hpp"
#include "segrl/optimize.hpp"
#include "segrl/toy_policy.hpp"
#include "segrl/trace.hpp"

namespace py = pybind11;
using namespace segrl;

namespace {

py::object json_to_py(const nlohmann::json& doc) {
    switch (doc.type()) {
        case nlohmann::json::value_t::null: return py::none();
        case nlohmann::json::value_t::boolean: return py::bool_(doc.get<bool>());
        case nlohmann::json::value_t::number_integer: return py::int_(doc.get<long long>());
        case nlohmann::json::value_t::number_unsigned:
            return py::int_(doc.get<unsigned long long>());
        case nlohmann::json::value_t::number_float: return py::float_(doc.get<double>());
        case nlohmann::json::value_t::string: return py::str(doc.get<std::string>());
        case nlohmann::json::value_t::array: {
            py::list out;
            for (const auto& item : doc) out.append(json_to_py(item));
            return out;
        }
        case nlohmann::json::value_t::object: {
            py::dict out;
            for (const auto& [key, value] : doc.items()) out[py::str(key)] = json_to_py(value);
            return out;
        }
        default: return py::none();
    }
}

ConfigMap config_map_from(const py::dict& values) {
    ConfigMap out;
    for (const auto& item : values)
        out[py::cast<std::string>(item.first)] = py::cast<std::string>(py::str(item.second));
    return out;
}

py::dict report_to_py(const FormatReport& report) {
    py::dict out;
    out["score"] = report.score;
    out["critical"] = report.critical;
    py::list violations;
    for (Violation v : report.violations) violations.append(std::string(violation_name(v)));
    out["violations"] = violations;
    return out;
}

SegmentList segments_from(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    SegmentList list;
    for (const auto& [a, b] : pairs) list.append(Segment{a, b});
    return list;
}

// The training facade behind the python surface: a corpus generated from the
// config, the two-role tabular policy, its frozen reference, and an optimizer.
class Engine {
public:
    explicit Engine(const py::dict& config)
        : config_(engine_config_from(config_map_from(config))),
          tasks_(generate_tasks(config_.env, config_.train.seed,
                                static_cast<std::size_t>(config_.task_count))),
          policy_(std::make_unique<ToyGridPolicy>(config_.policy)),
          reference_(policy_->snapshot()),
          optimizer_(config_.train) {}

    py::dict train(int steps) {
        StepMetrics last;
        std::vector<TrainItem> batch(static_cast<std::size_t>(config_.train.batch_size));
        for (int s = 0; s < steps; ++s) {
            ++step_;
            for (int j = 0; j < config_.train.batch_size; ++j) {
                const PlantedTask& task =
                    tasks_[(static_cast<std::size_t>(step_ - 1) * config_.train.batch_size + j) %
                           tasks_.size()];
                batch[static_cast<std::size_t>(j)] = TrainItem{&task.question, &task.series};
            }
            last = train_step(*policy_, *reference_, batch, config_.train, optimizer_, step_);
        }
        return py::cast<py::dict>(json_to_py(last.to_json()));
    }

    py::dict evaluate_heldout(std::uint64_t corpus_seed, int count) {
        const std::vector<PlantedTask> heldout =
            generate_tasks(config_.env, corpus_seed, static_cast<std::size_t>(count));
        EvalOptions options;
        options.rollout = config_.train.rollout_options();
        options.weights = config_.train.weights;
        options.seed = hash_combine(config_.train.seed, corpus_seed);
        options.full_series = config_.train.ablation.reasoner_only;
        const EvalSummary summary = evaluate(*policy_, *policy_, heldout, options);
        return py::cast<py::dict>(json_to_py(summary.to_json()));
    }

    py::dict trajectory(std::uint64_t task_index) {
        const PlantedTask& task = tasks_.at(task_index);
        Rng rng = derive_rng(config_.train.seed, {task_index, 0x7eaceull});
        const RolloutTrajectory t =
            run_trajectory(*policy_, *policy_, task.question, task.series,
                           config_.train.rollout_options(), rng);
        return py::cast<py::dict>(json_to_py(trajectory_to_json(t)));
    }

    py::list tasks() const {
        py::list out;
        for (const PlantedTask& task : tasks_) out.append(json_to_py(task_to_json(task)));
        return out;
    }

    std::vector<double> parameters() const { return policy_->parameters(); }
    int step() const { return step_; }

private:
    EngineConfig config_;
    std::vector<PlantedTask> tasks_;
    std::unique_ptr<ToyGridPolicy> policy_;
    std::unique_ptr<Policy> reference_;
    Optimizer optimizer_;
    int step_ = 0;
};

}  // namespace

PYBIND11_MODULE(_segrl, m) {
    m.doc() = "self-play segment-selection trainer for time-series QA";

    m.def(
        "parse_reasoner",
        [](const std::string& raw) {
            const ReasonerParse parsed = parse_reasoner(raw);
            py::dict out = report_to_py(parsed.report);
            out["think"] = parsed.step.think;
            out["answer"] = parsed.step.answer;
            return out;
        },
        py::arg("raw"), "Parse and score one reasoner message.");

    m.def(
        "parse_controller",
        [](const std::string& raw, std::size_t series_length, bool accept_allowed) {
            const ControllerParse parsed =
                parse_controller(raw, ControllerParseContext{series_length, accept_allowed});
            py::dict out = report_to_py(parsed.report);
            out["think"] = parsed.step.think;
            out["decision"] =
                parsed.step.decision == DecisionKind::kAccept ? "accept" : "continue";
            if (parsed.step.proposed_segment)
                out["segment"] = py::make_tuple(parsed.step.proposed_segment->start,
                                                parsed.step.proposed_segment->end);
            else
                out["segment"] = py::none();
            return out;
        },
        py::arg("raw"), py::arg("series_length"), py::arg("accept_allowed") = true,
        "Parse and score one controller message (half-open result segment).");

    m.def(
        "controller_trajectory_score",
        [](const std::vector<std::tuple<double, bool, std::string>>& steps) {
            std::vector<ControllerStep> parsed;
            for (const auto& [score, critical, decision] : steps) {
                ControllerStep s;
                s.format_score = score;
                s.violation = critical;
                s.decision = decision == "accept" ? DecisionKind::kAccept
                                                  : DecisionKind::kContinue;
                if (s.decision == DecisionKind::kContinue) s.proposed_segment = Segment{0, 1};
                parsed.push_back(s);
            }
            return score_controller_trajectory(parsed);
        },
        py::arg("steps"),
        "Trajectory-level format score from (score, critical, decision) triples.");

    m.def(
        "parse_trace",
        [](const std::string& raw, std::size_t series_length) {
            const TraceParse parsed = parse_trace(raw, series_length);
            py::dict out;
            out["ok"] = parsed.ok;
            out["error"] = parsed.error;
            out["answer"] = parsed.answer;
            py::list steps;
            for (const TraceStep& step : parsed.steps) {
                py::dict entry;
                entry["think"] = step.think;
                entry["segment"] = step.segment ? py::object(py::make_tuple(
                                                      step.segment->start, step.segment->end))
                                                : py::object(py::none());
                steps.append(entry);
            }
            out["steps"] = steps;
            out["lint"] = parsed.lint;
            return out;
        },
        py::arg("raw"), py::arg("series_length") = 0,
        "Parse an interleaved reasoning trace; template issues land in lint.");

    m.def(
        "slice_series",
        [](const std::vector<double>& values, std::size_t start, std::size_t end) {
            return slice(TimeSeries{"py", values}, Segment{start, end});
        },
        py::arg("values"), py::arg("start"), py::arg("end"));

    m.def(
        "coverage_fraction",
        [](const std::vector<std::pair<std::size_t, std::size_t>>& segments,
           std::size_t series_length) {
            return coverage_fraction(segments_from(segments), series_length);
        },
        py::arg("segments"), py::arg("series_length"));

    m.def("normalize_answer", [](const std::string& text) { return normalize_answer(text); });

    m.def(
        "correctness",
        [](const std::string& gold, const std::string& predicted) {
            Question q{"py", "p", {"A", "B", "C", "D", "E", "F"}, "A"};
            q.gold = normalize_answer(gold);
            if (std::find(q.options.begin(), q.options.end(), q.gold) == q.options.end())
                q.options.push_back(q.gold);
            return correctness(q, predicted);
        },
        py::arg("gold"), py::arg("predicted"));

    m.def("reliability",
          [](const std::vector<int>& flags) { return reliability(flags); });

    m.def(
        "controller_reward",
        [](double format_score, double reliability_value, double reliability_weight,
           double format_weight) {
            RewardWeights w;
            w.reliability = reliability_weight;
            w.controller_format = format_weight;
            return controller_reward(format_score, reliability_value, w);
        },
        py::arg("format_score"), py::arg("reliability"), py::arg("reliability_weight") = 0.9,
        py::arg("format_weight") = 0.1);

    m.def(
        "reasoner_reward",
        [](int correct, double format_score, double correctness_weight, double format_weight) {
            RewardWeights w;
            w.correctness = correctness_weight;
            w.reasoner_format = format_weight;
            return reasoner_reward(correct, format_score, w);
        },
        py::arg("correct"), py::arg("format_score"), py::arg("correctness_weight") = 0.9,
        py::arg("format_weight") = 0.1);

    m.def(
        "group_advantages",
        [](const std::vector<double>& rewards, double epsilon) {
            return group_advantages(rewards, epsilon);
        },
        py::arg("rewards"), py::arg("epsilon") = 1e-6);

    m.def(
        "variance_guided_pick",
        [](const std::vector<double>& variances, std::uint64_t seed) {
            Rng rng(seed);
            return variance_guided_pick(variances, rng);
        },
        py::arg("variances"), py::arg("seed"));

    m.def(
        "generate_tasks",
        [](const py::dict& config, std::uint64_t seed, std::size_t count) {
            const EngineConfig engine = engine_config_from(config_map_from(config));
            py::list out;
            for (const PlantedTask& task : generate_tasks(engine.env, seed, count))
                out.append(json_to_py(task_to_json(task)));
            return out;
        },
        py::arg("config") = py::dict(), py::arg("seed") = 1, py::arg("count") = 10,
        "Generate planted-pattern QA tasks; config uses 'section.key' strings.");

    py::class_<Engine>(m, "Engine",
                       "Two-role policy with its corpus, reference and optimizer.")
        .def(py::init<const py::dict&>(), py::arg("config") = py::dict())
        .def("train", &Engine::train, py::arg("steps"),
             "Run training steps; returns the last step's metrics.")
        .def("evaluate", &Engine::evaluate_heldout, py::arg("corpus_seed") = 999,
             py::arg("count") = 200, "Evaluate on a freshly generated held-out corpus.")
        .def("trajectory", &Engine::trajectory, py::arg("task_index"),
             "Roll one audit trajectory on a corpus task.")
        .def("tasks", &Engine::tasks)
        .def("parameters", &Engine::parameters)
        .def_property_readonly("step", &Engine::step);
}
