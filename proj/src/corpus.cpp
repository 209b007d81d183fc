#include "segrl/corpus.hpp"

#include <fstream>

namespace segrl {

namespace {
constexpr const char* kFormat = "segrl-corpus";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json task_to_json(const PlantedTask& task) {
    nlohmann::json intervals = nlohmann::json::array();
    for (const Segment& s : task.intervals) intervals.push_back({s.start, s.end});
    nlohmann::json kinds = nlohmann::json::array();
    for (PatternKind k : task.kinds) kinds.push_back(std::string(pattern_name(k)));
    return {
        {"id", task.id},
        {"values", task.series.values},
        {"intervals", intervals},
        {"kinds", kinds},
        {"question",
         {{"id", task.question.id},
          {"prompt", task.question.prompt},
          {"options", task.question.options},
          {"gold", task.question.gold}}},
        {"noise_sigma", task.noise_sigma},
        {"two_interval", task.two_interval},
    };
}

PlantedTask task_from_json(const nlohmann::json& doc) {
    PlantedTask task;
    task.id = doc.at("id").get<std::string>();
    task.series = TimeSeries{task.id, doc.at("values").get<std::vector<double>>()};
    for (const auto& pair : doc.at("intervals"))
        task.intervals.push_back(Segment{pair.at(0).get<std::size_t>(),
                                         pair.at(1).get<std::size_t>()});
    for (const auto& name : doc.at("kinds"))
        task.kinds.push_back(pattern_from_name(name.get<std::string>()));
    const nlohmann::json& q = doc.at("question");
    task.question.id = q.at("id").get<std::string>();
    task.question.prompt = q.at("prompt").get<std::string>();
    task.question.options = q.at("options").get<std::vector<std::string>>();
    task.question.gold = q.at("gold").get<std::string>();
    task.noise_sigma = doc.at("noise_sigma").get<double>();
    task.two_interval = doc.at("two_interval").get<bool>();
    validate_series(task.series);
    validate_question(task.question);
    return task;
}

void write_corpus(const std::filesystem::path& path, const nlohmann::json& header,
                  std::span<const PlantedTask> tasks) {
    std::ofstream out(path);
    if (!out) throw CorpusError("cannot write corpus file " + path.string());
    nlohmann::json head = header;
    head["format"] = kFormat;
    head["version"] = kVersion;
    head["task_count"] = tasks.size();
    out << head.dump() << '\n';
    for (const PlantedTask& task : tasks) out << task_to_json(task).dump() << '\n';
    if (!out) throw CorpusError("short write to corpus file " + path.string());
}

Corpus read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open corpus file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw CorpusError("empty corpus file " + path.string());
    Corpus corpus;
    corpus.header = nlohmann::json::parse(line, nullptr, false);
    if (corpus.header.is_discarded() ||
        corpus.header.value("format", std::string()) != kFormat)
        throw CorpusError("not a corpus file: " + path.string());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded())
            throw CorpusError("corpus line " + std::to_string(line_no) + " is not valid JSON");
        try {
            corpus.tasks.push_back(task_from_json(doc));
        } catch (const std::exception& err) {
            throw CorpusError("corpus line " + std::to_string(line_no) + ": " + err.what());
        }
    }
    return corpus;
}

}  // namespace segrl
