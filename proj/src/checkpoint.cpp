#include "planmae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "planmae/error.hpp"

namespace planmae {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'A', 'E'};

[[noreturn]] void corrupt(const std::string& why) {
    throw Error(ErrorCode::CorruptCheckpoint, why);
}

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

template <typename U>
U get_le(std::span<const std::uint8_t> in, std::size_t offset) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(in[offset + i]) << (8 * i);
    return value;
}

struct NamedTensor {
    std::string name;
    const Mat<float>* tensor;
};

std::vector<NamedTensor> collect(const Checkpoint& ckpt) {
    std::vector<NamedTensor> out;
    for_each_tensor(ckpt.params, [&](const std::string& name, const Mat<float>& m) {
        out.push_back({name, &m});
    });
    if (ckpt.opt) {
        for_each_tensor(ckpt.opt->m, [&](const std::string& name, const Mat<float>& m) {
            out.push_back({"opt.m/" + name, &m});
        });
        for_each_tensor(ckpt.opt->v, [&](const std::string& name, const Mat<float>& m) {
            out.push_back({"opt.v/" + name, &m});
        });
    }
    return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    const auto tensors = collect(ckpt);
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        const std::uint64_t nbytes = static_cast<std::uint64_t>(t.tensor->size()) * sizeof(float);
        entries.push_back({{"name", t.name},
                           {"shape", {t.tensor->rows(), t.tensor->cols()}},
                           {"offset", offset},
                           {"nbytes", nbytes}});
        offset += nbytes;
    }
    nlohmann::json manifest = {
        {"config", to_json(ckpt.config)},
        {"step", ckpt.step},
        {"tensors", entries},
        {"payload_bytes", offset},
    };
    if (ckpt.train) {
        manifest["train"] = to_json(*ckpt.train);
        manifest["train_seed"] = ckpt.train->seed;
    }
    if (ckpt.opt) {
        manifest["optimizer"] = {{"step", ckpt.opt->step},
                                 {"learning_rate", ckpt.opt->learning_rate},
                                 {"beta1", ckpt.opt->beta1},
                                 {"beta2", ckpt.opt->beta2},
                                 {"epsilon", ckpt.opt->epsilon},
                                 {"weight_decay", ckpt.opt->weight_decay}};
    }
    const std::string text = manifest.dump();

    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    out.reserve(out.size() + offset);
    for (const auto& t : tensors) {
        for (Eigen::Index i = 0; i < t.tensor->size(); ++i) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t.tensor->data()[i]));
        }
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt("bad magic");
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion) corrupt("unsupported version " + std::to_string(version));
    const auto manifest_len = get_le<std::uint64_t>(bytes, 8);
    if (manifest_len > bytes.size() - 16) corrupt("manifest length exceeds file size");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 16,
                                         bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("manifest is not valid JSON: ") + e.what());
    }
    const auto payload = bytes.subspan(16 + manifest_len);

    Checkpoint ckpt;
    try {
        ckpt.config = model_config_from_json(manifest.at("config"));
        ckpt.config.validate();
        ckpt.step = manifest.at("step").get<std::int64_t>();
        if (manifest.contains("train")) ckpt.train = train_config_from_json(manifest.at("train"));
        ckpt.params = ModelParams<float>::zeros(ckpt.config);
        if (manifest.contains("optimizer")) {
            const auto& o = manifest.at("optimizer");
            OptState opt = OptState::for_params(ckpt.config);
            opt.step = o.at("step").get<std::int64_t>();
            opt.learning_rate = o.at("learning_rate").get<double>();
            opt.beta1 = o.at("beta1").get<double>();
            opt.beta2 = o.at("beta2").get<double>();
            opt.epsilon = o.at("epsilon").get<double>();
            opt.weight_decay = o.at("weight_decay").get<double>();
            ckpt.opt = std::move(opt);
        }
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("manifest: ") + e.what());
    } catch (const Error& e) {
        corrupt(e.what());
    }

    const auto expected = collect(ckpt);
    const auto& entries = manifest.at("tensors");
    if (!entries.is_array() || entries.size() != expected.size()) {
        corrupt("tensor count does not match config");
    }
    std::uint64_t offset = 0;
    for (std::size_t t = 0; t < expected.size(); ++t) {
        const auto& e = entries[t];
        const Mat<float>& target = *expected[t].tensor;
        try {
            const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
            if (e.at("name").get<std::string>() != expected[t].name || shape.size() != 2 ||
                shape[0] != target.rows() || shape[1] != target.cols()) {
                corrupt("tensor " + expected[t].name + " disagrees with config-derived shape");
            }
            const std::uint64_t nbytes = static_cast<std::uint64_t>(target.size()) * sizeof(float);
            if (e.at("offset").get<std::uint64_t>() != offset ||
                e.at("nbytes").get<std::uint64_t>() != nbytes) {
                corrupt("tensor " + expected[t].name + " has inconsistent offset/length");
            }
            offset += nbytes;
        } catch (const nlohmann::json::exception& ex) {
            corrupt(std::string("tensor entry: ") + ex.what());
        }
    }
    if (payload.size() != offset) {
        corrupt("payload is " + std::to_string(payload.size()) + " bytes, manifest expects " +
                std::to_string(offset));
    }
    std::size_t pos = 0;
    for (const auto& t : expected) {
        auto* m = const_cast<Mat<float>*>(t.tensor);
        for (Eigen::Index i = 0; i < m->size(); ++i, pos += 4) {
            m->data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(payload, pos));
        }
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace planmae
