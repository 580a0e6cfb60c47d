#include "checkpoint.hpp"
#include "jsonio.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");
static_assert(sizeof(float) == 4, "checkpoint format assumes 32-bit IEEE floats");

namespace ptlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

uint64_t fnv1a64(const void * data, size_t len) {
    const unsigned char * p = (const unsigned char *) data;
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < len; i++) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

void append_entry(std::vector<tensor_entry> & entries, uint64_t & offset,
                  const std::string & name, const tensor<float> & t) {
    tensor_entry e;
    e.name = name;
    e.shape = t.shape;
    e.offset = offset;
    e.length = (uint64_t) t.numel() * sizeof(float);
    offset += e.length;
    entries.push_back(std::move(e));
}

} // namespace

void save_checkpoint(const std::string & dir, const param_set<float> & params,
                     const opt_state<float> * opt, int64_t step, uint64_t rng_seed) {
    params.config.validate();
    if (params.tensors.empty()) throw error(errc::argument, "save_checkpoint: empty parameter set");
    if (opt && opt->m.size() != params.tensors.size()) {
        throw_dim("save_checkpoint: optimizer state does not match parameters");
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_checkpoint("cannot create directory " + dir + ": " + ec.message());

    std::vector<std::pair<std::string, const tensor<float> *>> blobs;
    for (auto & [name, t] : params.tensors) blobs.emplace_back(name, &t);
    if (opt) {
        for (size_t i = 0; i < params.tensors.size(); i++) {
            blobs.emplace_back("opt.m." + opt->m[i].first, &opt->m[i].second);
        }
        for (size_t i = 0; i < params.tensors.size(); i++) {
            blobs.emplace_back("opt.v." + opt->v[i].first, &opt->v[i].second);
        }
    }

    std::vector<tensor_entry> entries;
    uint64_t offset = 0;
    for (auto & [name, t] : blobs) append_entry(entries, offset, name, *t);

    const std::string wpath = (fs::path(dir) / "weights.bin").string();
    {
        std::ofstream f(wpath, std::ios::binary | std::ios::trunc);
        if (!f) throw_checkpoint("cannot write " + wpath);
        uint64_t checksum = 14695981039346656037ull;
        for (auto & [name, t] : blobs) {
            const char * bytes = (const char *) t->data.data();
            const size_t len = t->data.size() * sizeof(float);
            f.write(bytes, (std::streamsize) len);
            for (size_t i = 0; i < len; i++) {
                checksum ^= (unsigned char) bytes[i];
                checksum *= 1099511628211ull;
            }
        }
        f.write((const char *) &checksum, sizeof(checksum));
        if (!f) throw_checkpoint("write failed for " + wpath);
    }

    json manifest;
    manifest["format_version"] = CHECKPOINT_FORMAT_VERSION;
    manifest["model"] = model_config_to_json_obj(params.config);
    manifest["step"] = step;
    manifest["rng_seed"] = rng_seed;
    manifest["has_opt_state"] = opt != nullptr;
    manifest["blob_bytes"] = offset;
    manifest["tensors"] = json::array();
    for (const tensor_entry & e : entries) {
        manifest["tensors"].push_back({
            {"name", e.name},
            {"shape", e.shape},
            {"offset", e.offset},
            {"length", e.length},
        });
    }
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    std::ofstream mf(mpath, std::ios::trunc);
    if (!mf) throw_checkpoint("cannot write " + mpath);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw_checkpoint("write failed for " + mpath);
}

loaded_checkpoint load_checkpoint(const std::string & dir) {
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    const std::string wpath = (fs::path(dir) / "weights.bin").string();
    const json j = load_json_file(mpath, errc::checkpoint);
    const std::string ctx = mpath;

    checkpoint_manifest man;
    man.format_version = (int32_t) json_int(j, "format_version", ctx);
    if (man.format_version != CHECKPOINT_FORMAT_VERSION) {
        throw_checkpoint(ctx + ": unsupported format version " + std::to_string(man.format_version));
    }
    if (!j.contains("model") || !j["model"].is_object()) throw_checkpoint(ctx + ": missing 'model'");
    try {
        man.config = model_config_from_json(j["model"], ctx);
    } catch (const error & e) {
        throw_checkpoint(std::string(e.what()));
    }
    man.step = json_int(j, "step", ctx);
    man.rng_seed = (uint64_t) json_int(j, "rng_seed", ctx);
    man.has_opt_state = json_bool_or(j, "has_opt_state", false, ctx);
    man.blob_bytes = (uint64_t) json_int(j, "blob_bytes", ctx);
    if (!j.contains("tensors") || !j["tensors"].is_array() || j["tensors"].empty()) {
        throw_checkpoint(ctx + ": missing tensor index");
    }
    uint64_t expect_offset = 0;
    for (const json & e : j["tensors"]) {
        tensor_entry te;
        te.name = json_str(e, "name", ctx);
        if (!e.contains("shape") || !e["shape"].is_array()) throw_checkpoint(ctx + ": tensor without shape");
        for (const json & d : e["shape"]) {
            if (!d.is_number_integer()) throw_checkpoint(ctx + ": non-integer shape entry for " + te.name);
            te.shape.push_back(d.get<int64_t>());
        }
        te.offset = (uint64_t) json_int(e, "offset", ctx);
        te.length = (uint64_t) json_int(e, "length", ctx);
        int64_t numel = 1;
        for (int64_t d : te.shape) {
            if (d < 1) throw_checkpoint(ctx + ": bad shape for " + te.name);
            numel *= d;
        }
        if (te.length != (uint64_t) numel * sizeof(float)) {
            throw_checkpoint(ctx + ": length mismatch for " + te.name);
        }
        if (te.offset != expect_offset) {
            throw_checkpoint(ctx + ": tensor data must be contiguous, bad offset for " + te.name);
        }
        expect_offset += te.length;
        man.tensors.push_back(std::move(te));
    }
    if (expect_offset != man.blob_bytes) throw_checkpoint(ctx + ": blob_bytes does not match tensor index");

    std::ifstream f(wpath, std::ios::binary);
    if (!f) throw_checkpoint("cannot open " + wpath);
    std::vector<char> blob;
    f.seekg(0, std::ios::end);
    const std::streamoff fsize = f.tellg();
    f.seekg(0, std::ios::beg);
    if (fsize < 0 || (uint64_t) fsize != man.blob_bytes + sizeof(uint64_t)) {
        throw_checkpoint(wpath + ": size does not match manifest");
    }
    blob.resize((size_t) man.blob_bytes);
    f.read(blob.data(), (std::streamsize) blob.size());
    uint64_t stored = 0;
    f.read((char *) &stored, sizeof(stored));
    if (!f) throw_checkpoint("read failed for " + wpath);
    if (fnv1a64(blob.data(), blob.size()) != stored) {
        throw_checkpoint(wpath + ": checksum mismatch, refusing to load");
    }

    auto read_tensor = [&](const tensor_entry & e) {
        tensor<float> t(e.shape);
        std::memcpy(t.data.data(), blob.data() + e.offset, (size_t) e.length);
        if (!t.all_finite()) throw_checkpoint(wpath + ": non-finite values in tensor " + e.name);
        return t;
    };

    loaded_checkpoint out;
    out.params.config = man.config;
    out.step = man.step;
    out.rng_seed = man.rng_seed;

    // the model tensors must match the schema exactly, in order
    const auto schema = tensor_schema(man.config);
    size_t at = 0;
    for (const auto & [want_name, want_shape] : schema) {
        if (at >= man.tensors.size() || man.tensors[at].name != want_name ||
            man.tensors[at].shape != want_shape) {
            throw_checkpoint(ctx + ": tensor index does not match model schema at " + want_name);
        }
        out.params.tensors.emplace_back(want_name, read_tensor(man.tensors[at]));
        at++;
    }
    if (man.has_opt_state) {
        opt_state<float> opt;
        opt.step = man.step;
        for (const char * prefix : {"opt.m.", "opt.v."}) {
            for (const auto & [want_name, want_shape] : schema) {
                const std::string full = prefix + want_name;
                if (at >= man.tensors.size() || man.tensors[at].name != full ||
                    man.tensors[at].shape != want_shape) {
                    throw_checkpoint(ctx + ": optimizer state does not match model schema at " + full);
                }
                auto & dst = prefix[4] == 'm' ? opt.m : opt.v;
                dst.emplace_back(want_name, read_tensor(man.tensors[at]));
                at++;
            }
        }
        out.opt = std::move(opt);
    }
    if (at != man.tensors.size()) throw_checkpoint(ctx + ": unexpected extra tensors in index");

    out.manifest = std::move(man);
    return out;
}

model_config model_config_from_json_file(const std::string & path) {
    return model_config_from_json(load_json_file(path, errc::config), path);
}

std::string model_config_to_json(const model_config & cfg) {
    return model_config_to_json_obj(cfg).dump(2);
}

} // namespace ptlab
