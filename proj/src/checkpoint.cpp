#include "cbvd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace cbvd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace {

void put_u32(std::string& out, std::uint32_t v)
{
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    const char* take(std::size_t n, const char* what)
    {
        if (bytes_.size() - pos_ < n)
            throw LoadError("checkpoint truncated while reading " + std::string(what) + " at byte "
                            + std::to_string(pos_));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::uint32_t u32(const char* what)
    {
        std::uint32_t v;
        std::memcpy(&v, take(4, what), 4);
        return v;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct NamedArray {
    std::string name;
    Shape shape;
    const TensorF::Array* values;
};

void put_tensor(std::string& out, const std::string& name, const Shape& shape, const TensorF::Array& values)
{
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (Index e : shape)
        put_u32(out, static_cast<std::uint32_t>(e));
    out.append(reinterpret_cast<const char*>(values.data()), static_cast<std::size_t>(values.size()) * sizeof(float));
}

std::vector<NamedArray> all_tensors(const Checkpoint& ckpt)
{
    std::vector<NamedArray> out;
    const ParameterList<float> params = parameters(ckpt.params);
    for (const auto& p : params)
        out.push_back({p.name, p.tensor.shape(), &p.tensor.values()});
    const auto add_moments = [&](const char* prefix, const ParameterList<float>& list, const AdamState<float>& state) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            out.push_back({std::string(prefix) + ".m:" + list[i].name, list[i].tensor.shape(), &state.m[i]});
            out.push_back({std::string(prefix) + ".v:" + list[i].name, list[i].tensor.shape(), &state.v[i]});
        }
    };
    add_moments("adam1", stage1_parameters(ckpt.params), ckpt.adam1);
    add_moments("adam2", stage2_parameters(ckpt.params), ckpt.adam2);
    return out;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt)
{
    KeyValues snapshot = ckpt.config.to_key_values();
    snapshot.set("stage", to_string(ckpt.stage));
    snapshot.set("adam1.step", std::to_string(ckpt.adam1.step_count));
    snapshot.set("adam1.lr", format_double(ckpt.adam1.lr));
    snapshot.set("adam2.step", std::to_string(ckpt.adam2.step_count));
    snapshot.set("adam2.lr", format_double(ckpt.adam2.lr));
    const std::string text = render_key_values(snapshot);

    std::string out = "CBVD";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    const auto tensors = all_tensors(ckpt);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.values->size() != shape_size(t.shape))
            throw ContractError("serialize_checkpoint: '" + t.name + "' does not match its shape");
        put_tensor(out, t.name, t.shape, *t.values);
    }
    const std::uint64_t sum = fnv1a64(out);
    out.append(reinterpret_cast<const char*>(&sum), sizeof sum);
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& file)
{
    Reader header(file);
    if (std::string(header.take(4, "magic"), 4) != "CBVD")
        throw LoadError("not a checkpoint: bad magic");
    const std::uint32_t version = header.u32("version");
    if (version != kCheckpointVersion)
        throw LoadError("checkpoint format version " + std::to_string(version) + " is not supported (expected "
                        + std::to_string(kCheckpointVersion) + ")");
    if (file.size() < 16)
        throw LoadError("checkpoint truncated: " + std::to_string(file.size()) + " bytes");
    std::uint64_t stored = 0;
    std::memcpy(&stored, file.data() + file.size() - 8, 8);
    const std::string bytes = file.substr(0, file.size() - 8);
    if (fnv1a64(bytes) != stored)
        throw LoadError("checkpoint checksum mismatch: file is truncated or corrupt");

    Reader in(bytes);
    in.take(8, "header");
    const std::uint32_t text_len = in.u32("snapshot length");
    const std::string text(in.take(text_len, "config snapshot"), text_len);

    Checkpoint ckpt;
    try {
        KeyValues snapshot = parse_key_values(text, "checkpoint snapshot");
        KeyValues train;
        for (const auto& [k, v] : snapshot.entries())
            if (k.rfind("adam", 0) != 0 && k != "stage")
                train.set(k, v);
        ckpt.config = TrainConfig::from_key_values(train);
        ckpt.config.validate();
        ckpt.stage = parse_stage(snapshot.get("stage"));
        ckpt.params = init_params<float>(ckpt.config.network(), ckpt.config.seed);
        ckpt.adam1 = make_adam_state(stage1_parameters(ckpt.params), ckpt.config.lr1);
        ckpt.adam2 = make_adam_state(stage2_parameters(ckpt.params), ckpt.config.lr2);
        ckpt.adam1.step_count = parse_uint(snapshot.get("adam1.step"), "adam1.step");
        ckpt.adam1.lr = parse_double(snapshot.get("adam1.lr"), "adam1.lr");
        ckpt.adam2.step_count = parse_uint(snapshot.get("adam2.step"), "adam2.step");
        ckpt.adam2.lr = parse_double(snapshot.get("adam2.lr"), "adam2.lr");
    } catch (const LoadError&) {
        throw;
    } catch (const std::exception& e) {
        throw LoadError(std::string("bad checkpoint snapshot: ") + e.what());
    }

    std::map<std::string, const NamedArray*> expected;
    const auto targets = all_tensors(ckpt);
    for (const auto& t : targets)
        expected.emplace(t.name, &t);

    const std::uint32_t count = in.u32("tensor count");
    if (count != targets.size())
        throw LoadError("checkpoint holds " + std::to_string(count) + " tensors, architecture needs "
                        + std::to_string(targets.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = in.u32("tensor name length");
        const std::string name(in.take(name_len, "tensor name"), name_len);
        const auto it = expected.find(name);
        if (it == expected.end())
            throw LoadError("unexpected tensor '" + name + "' in checkpoint");
        const std::uint32_t rank = in.u32("tensor rank");
        Shape shape;
        for (std::uint32_t r = 0; r < rank && r < 8; ++r)
            shape.push_back(in.u32("tensor extent"));
        if (shape != it->second->shape)
            throw LoadError("tensor '" + name + "' has shape " + to_string(shape) + ", architecture needs "
                            + to_string(it->second->shape));
        auto* values = const_cast<TensorF::Array*>(it->second->values);
        const std::size_t n = static_cast<std::size_t>(values->size()) * sizeof(float);
        std::memcpy(values->data(), in.take(n, "tensor payload"), n);
        if (!values->allFinite())
            throw LoadError("tensor '" + name + "' holds non-finite values");
        expected.erase(it);
    }
    if (!in.done())
        throw LoadError("trailing bytes after the last tensor");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError("cannot open checkpoint " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return deserialize_checkpoint(buf.str());
    } catch (const LoadError& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::uint64_t fnv1a64(const std::string& bytes)
{
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace cbvd
