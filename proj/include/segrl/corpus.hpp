#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "segrl/synthenv.hpp"

namespace segrl {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json task_to_json(const PlantedTask& task);
PlantedTask task_from_json(const nlohmann::json& doc);

// Line-delimited corpus: a header record carrying the effective config and
// generation seed, then one task per line. Reproducible byte-for-byte from
// the same (config, seed).
void write_corpus(const std::filesystem::path& path, const nlohmann::json& header,
                  std::span<const PlantedTask> tasks);

struct Corpus {
    nlohmann::json header;
    std::vector<PlantedTask> tasks;
};

Corpus read_corpus(const std::filesystem::path& path);

}  // namespace segrl
