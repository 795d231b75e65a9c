#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "treepos/model.hpp"
#include "treepos/train.hpp"

namespace treepos::cli {

struct DataPaths {
    std::string corpus;       // JSONL documents {"id", "code"}
    std::string eval_corpus;  // optional
    std::string pairs;        // JSONL clone pairs {"code1", "code2", "label"}
    std::string vocab;
};

// Merged settings of one run. The config file uses [model], [train], [data]
// and [run] sections of key = value lines.
struct RunConfig {
    model::ModelConfig model;
    bool vocab_size_set = false;
    train::TrainConfig train;
    DataPaths data;
    std::string output_dir = "out";
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
};

// Collects every unknown key, malformed value and constraint violation before
// throwing a single ConfigError.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);
std::string resolved_config(const RunConfig& cfg);

// Worker count after applying the TREEPOS_THREADS cap.
int effective_threads(int requested);

enum ExitCode : int { ok = 0, input_error = 1, io_error = 2 };

int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace treepos::cli
