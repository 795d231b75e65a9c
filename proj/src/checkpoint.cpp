#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "treepos/train.hpp"

namespace treepos::train {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'C', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Entry {
    std::string name;
    Mat* tensor;
};

std::vector<Entry> entries(model::Parameters& params, AdamState* opt) {
    std::vector<Entry> out;
    params.for_each([&](const std::string& n, Mat& m, model::Decay) { out.push_back({n, &m}); });
    if (opt) {
        opt->m.for_each([&](const std::string& n, Mat& m, model::Decay) { out.push_back({"adam.m/" + n, &m}); });
        opt->v.for_each([&](const std::string& n, Mat& m, model::Decay) { out.push_back({"adam.v/" + n, &m}); });
    }
    return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    auto copy = ckpt;
    auto list = entries(copy.params, copy.opt ? &*copy.opt : nullptr);
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& e : list) {
        manifest.push_back({{"name", e.name}, {"rows", e.tensor->rows()}, {"cols", e.tensor->cols()}});
    }
    nlohmann::json header = {{"format_version", kCheckpointVersion},
                             {"model", ckpt.model},
                             {"train", ckpt.train},
                             {"step", ckpt.step},
                             {"seed", ckpt.seed},
                             {"optimizer_step", ckpt.opt ? nlohmann::json(ckpt.opt->step) : nlohmann::json(nullptr)},
                             {"vocab", ckpt.vocab ? nlohmann::json(ckpt.vocab->serialize()) : nlohmann::json(nullptr)},
                             {"manifest", manifest}};
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    const auto len = static_cast<std::uint32_t>(text.size());
    out.append(reinterpret_cast<const char*>(&len), 4);
    out += text;
    for (const auto& e : list) {
        const Mat& m = *e.tensor;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const float f = static_cast<float>(m.data()[i]);
            out.append(reinterpret_cast<const char*>(&f), 4);
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a checkpoint (bad magic)");
    }
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 4, 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(len)) {
        throw CheckpointError("checkpoint truncated in header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    Checkpoint ckpt;
    try {
        const int version = header.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        }
        ckpt.model = header.at("model").get<model::ModelConfig>();
        ckpt.train = header.at("train").get<TrainConfig>();
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        if (!header.at("vocab").is_null()) {
            ckpt.vocab = tok::Vocab::deserialize(header["vocab"].get<std::string>());
        }
        ckpt.params = model::Parameters::zeros(ckpt.model);
        if (!header.at("optimizer_step").is_null()) {
            ckpt.opt = AdamState::zeros_like(ckpt.params);
            ckpt.opt->step = header["optimizer_step"].get<std::int64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    auto list = entries(ckpt.params, ckpt.opt ? &*ckpt.opt : nullptr);
    const auto& manifest = header.at("manifest");
    if (manifest.size() != list.size()) {
        throw CheckpointError("checkpoint manifest lists " + std::to_string(manifest.size()) + " tensors, model expects " +
                              std::to_string(list.size()));
    }
    std::size_t off = 8 + len;
    for (std::size_t k = 0; k < list.size(); ++k) {
        const auto& e = manifest[k];
        Mat& m = *list[k].tensor;
        const auto name = e.at("name").get<std::string>();
        if (name != list[k].name || e.at("rows").get<Eigen::Index>() != m.rows() ||
            e.at("cols").get<Eigen::Index>() != m.cols()) {
            throw CheckpointError("checkpoint tensor " + std::to_string(k) + " (" + name + ") does not match " +
                                  list[k].name + " [" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]");
        }
        const std::size_t need = static_cast<std::size_t>(m.size()) * 4;
        if (bytes.size() < off + need) {
            throw CheckpointError("checkpoint truncated in tensor " + name);
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            float f;
            std::memcpy(&f, bytes.data() + off + static_cast<std::size_t>(i) * 4, 4);
            m.data()[i] = f;
        }
        off += need;
    }
    if (off != bytes.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(bytes.size() - off) + " trailing bytes");
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string data = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write checkpoint " + path);
    }
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) {
        throw IoError("write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot read checkpoint " + path);
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace treepos::train
