#include "aide/redcnn.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "aide/rng.hpp"

namespace aide {

namespace {

std::vector<std::pair<int, int>> reference_shortcuts(int L) {
    // dec j takes enc (L - j) for odd j; enc 0 is the input itself
    std::vector<std::pair<int, int>> pairs;
    for (int j = 1; j <= L; j += 2) pairs.emplace_back(L - j, j);
    return pairs;
}

std::string conv_name(int i) { return "conv" + std::to_string(i); }
std::string deconv_name(int i) { return "deconv" + std::to_string(i); }

struct LayerSpec {
    std::string name;
    std::array<int, 4> kshape; // conv: (oc, ic, k, k); deconv: (ic, oc, k, k)
    int bias_ch;
};

std::vector<LayerSpec> layer_specs(const RedCnnConfig& c) {
    std::vector<LayerSpec> specs;
    const int L = c.num_enc_layers, ch = c.channels, k = c.kernel;
    for (int i = 1; i <= L; ++i) {
        const int ic = (i == 1) ? 1 : ch;
        specs.push_back({conv_name(i), {ch, ic, k, k}, ch});
    }
    for (int i = 1; i <= L; ++i) {
        const int oc = (i == L) ? 1 : ch;
        specs.push_back({deconv_name(i), {ch, oc, k, k}, oc});
    }
    return specs;
}

} // namespace

RedCnnConfig RedCnnConfig::defaults() {
    RedCnnConfig c;
    c.shortcut_pairs = reference_shortcuts(c.num_enc_layers);
    return c;
}

RedCnnConfig RedCnnConfig::desk() {
    RedCnnConfig c;
    c.num_enc_layers = 3;
    c.channels = 32;
    c.shortcut_pairs = reference_shortcuts(c.num_enc_layers);
    return c;
}

void RedCnnConfig::validate() const {
    if (num_enc_layers < 1) throw ConfigError("RedCnnConfig: need at least one encoder layer");
    if (channels < 1) throw ConfigError("RedCnnConfig: channels must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("RedCnnConfig: kernel must be odd");
    if (stride < 1 || padding < 0) throw ConfigError("RedCnnConfig: bad stride/padding");
    if (min_spatial() < 1)
        throw ConfigError("RedCnnConfig: shape arithmetic yields non-positive feature maps");
    for (auto [enc, dec] : shortcut_pairs) {
        if (enc < 0 || enc >= num_enc_layers || dec < 1 || dec > num_enc_layers)
            throw ConfigError("RedCnnConfig: shortcut pair (" + std::to_string(enc) + "," +
                              std::to_string(dec) + ") out of range");
        // matching spatial extents require enc + dec == num_enc_layers
        if (enc + dec != num_enc_layers)
            throw ConfigError("RedCnnConfig: shortcut (" + std::to_string(enc) + "," +
                              std::to_string(dec) + ") joins mismatched feature-map sizes");
    }
}

ExpertModel build_redcnn(const RedCnnConfig& config, uint64_t seed) {
    config.validate();
    ExpertModel model;
    model.config = config;
    Rng rng(seed);
    for (const auto& spec : layer_specs(config)) {
        Tensor4 w(spec.kshape[0], spec.kshape[1], spec.kshape[2], spec.kshape[3]);
        // Kaiming-uniform, fan-in = input channels of the op times kernel area
        const bool is_deconv = spec.name.rfind("deconv", 0) == 0;
        const int fan_in =
            (is_deconv ? spec.kshape[0] : spec.kshape[1]) * spec.kshape[2] * spec.kshape[3];
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        quantize_f32(w);
        model.params.add(spec.name + ".k", std::move(w));
        model.params.add(spec.name + ".b", Tensor4(1, spec.bias_ch, 1, 1));
    }
    model.train_fingerprint = "seed=" + std::to_string(seed);
    model.description = "untrained";
    return model;
}

Tensor4 redcnn_forward(const ExpertModel& model, const Tensor4& input, Precision prec) {
    const RedCnnConfig& c = model.config;
    const int L = c.num_enc_layers;

    std::vector<Tensor4> enc_out(L + 1); // [0] = input
    enc_out[0] = input;
    Tensor4 h = input;
    for (int i = 1; i <= L; ++i) {
        const auto& k = model.params.at(conv_name(i) + ".k").weights;
        const auto& b = model.params.at(conv_name(i) + ".b").weights;
        h = relu_forward(conv2d_forward(h, k, b, c.stride, c.padding, prec));
        enc_out[i] = h;
    }
    for (int j = 1; j <= L; ++j) {
        const auto& k = model.params.at(deconv_name(j) + ".k").weights;
        const auto& b = model.params.at(deconv_name(j) + ".b").weights;
        h = deconv2d_forward(h, k, b, c.stride, c.padding, prec);
        for (auto [enc, dec] : c.shortcut_pairs)
            if (dec == j) h = add(h, enc_out[enc]);
        h = relu_forward(h);
    }
    return h;
}

Tape::NodeId redcnn_forward_on_tape(ExpertModel& model, Tape& tape, Tape::NodeId input) {
    const RedCnnConfig& c = model.config;
    const int L = c.num_enc_layers;

    std::vector<Tape::NodeId> enc_out(L + 1);
    enc_out[0] = input;
    Tape::NodeId h = input;
    for (int i = 1; i <= L; ++i) {
        auto k = tape.param(model.params, conv_name(i) + ".k");
        auto b = tape.param(model.params, conv_name(i) + ".b");
        h = tape.relu(tape.conv2d(h, k, b, c.stride, c.padding));
        enc_out[i] = h;
    }
    for (int j = 1; j <= L; ++j) {
        auto k = tape.param(model.params, deconv_name(j) + ".k");
        auto b = tape.param(model.params, deconv_name(j) + ".b");
        h = tape.deconv2d(h, k, b, c.stride, c.padding);
        for (auto [enc, dec] : c.shortcut_pairs)
            if (dec == j) h = tape.add(h, enc_out[enc]);
        h = tape.relu(h);
    }
    return h;
}

Tensor4 denoise(const ExpertModel& model, const Tensor4& patches, Precision prec) {
    const int min_sp = model.config.min_spatial();
    if (patches.h() < min_sp || patches.w() < min_sp)
        throw ValidationError("denoise: patches " + shape_str(patches) +
                              " smaller than the receptive-field minimum " +
                              std::to_string(min_sp));
    for (double v : patches.data)
        if (v < -0.01 || v > 1.01)
            throw ValidationError("denoise: input value " + std::to_string(v) +
                                  " outside the normalized range [0,1]");
    Tensor4 out = redcnn_forward(model, patches, prec);
    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// --- serialization ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'A', 'I', 'D', 'E'};
constexpr uint16_t kFormatVersion = 1;

void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void put_i32(std::vector<uint8_t>& b, int32_t v) { put_u32(b, static_cast<uint32_t>(v)); }
void put_f32(std::vector<uint8_t>& b, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}
void put_str(std::vector<uint8_t>& b, const std::string& s) {
    put_u32(b, static_cast<uint32_t>(s.size()));
    b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size())
            throw IoError(IoError::Kind::truncated, "model file truncated at byte " +
                                                        std::to_string(pos));
    }
    uint16_t u16() {
        need(2);
        uint16_t v = buf[pos] | (buf[pos + 1] << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str() {
        uint32_t len = u32();
        need(len);
        std::string s(buf.begin() + pos, buf.begin() + pos + len);
        pos += len;
        return s;
    }
};

} // namespace

void save_model(const ExpertModel& model, const std::string& path) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u16(buf, kFormatVersion);

    const RedCnnConfig& c = model.config;
    put_i32(buf, c.num_enc_layers);
    put_i32(buf, c.channels);
    put_i32(buf, c.kernel);
    put_i32(buf, c.stride);
    put_i32(buf, c.padding);
    put_u32(buf, static_cast<uint32_t>(c.shortcut_pairs.size()));
    for (auto [enc, dec] : c.shortcut_pairs) {
        put_i32(buf, enc);
        put_i32(buf, dec);
    }
    put_i32(buf, model.cluster_id);
    put_str(buf, model.description);
    put_str(buf, model.train_fingerprint);

    put_u32(buf, static_cast<uint32_t>(model.params.size()));
    for (const auto& [name, entry] : model.params) {
        put_str(buf, name);
        for (int d : entry.weights.shape) put_i32(buf, d);
    }
    for (const auto& [name, entry] : model.params)
        for (double v : entry.weights.data) put_f32(buf, static_cast<float>(v));

    const uint32_t crc =
        static_cast<uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_model: cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_model: write to '" + path + "' failed");
}

ExpertModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_model: cannot open '" + path + "'");
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

    if (buf.size() < 10)
        throw IoError(IoError::Kind::truncated, "model file too small (" +
                                                    std::to_string(buf.size()) + " bytes)");

    const uint32_t stored_crc = buf[buf.size() - 4] | (buf[buf.size() - 3] << 8) |
                                (buf[buf.size() - 2] << 16) |
                                (static_cast<uint32_t>(buf[buf.size() - 1]) << 24);
    const uint32_t actual_crc =
        static_cast<uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
    Reader r{buf};

    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw IoError(IoError::Kind::magic, "model file '" + path + "' has wrong magic");
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kFormatVersion)
        throw IoError(IoError::Kind::version, "model format version " + std::to_string(version) +
                                                  " unsupported (expected " +
                                                  std::to_string(kFormatVersion) + ")");
    if (actual_crc != stored_crc)
        throw IoError(IoError::Kind::checksum, "model file '" + path + "' failed its checksum");

    ExpertModel model;
    RedCnnConfig& c = model.config;
    c.num_enc_layers = r.i32();
    c.channels = r.i32();
    c.kernel = r.i32();
    c.stride = r.i32();
    c.padding = r.i32();
    const uint32_t n_pairs = r.u32();
    for (uint32_t i = 0; i < n_pairs; ++i) {
        int enc = r.i32();
        int dec = r.i32();
        c.shortcut_pairs.emplace_back(enc, dec);
    }
    model.cluster_id = r.i32();
    model.description = r.str();
    model.train_fingerprint = r.str();
    c.validate();

    const uint32_t n_params = r.u32();
    const auto expected = layer_specs(c);
    if (n_params != expected.size() * 2)
        throw IoError(IoError::Kind::shape_table,
                      "shape table lists " + std::to_string(n_params) + " tensors, config needs " +
                          std::to_string(expected.size() * 2));

    struct TableRow {
        std::string name;
        std::array<int, 4> shape;
    };
    std::vector<TableRow> table(n_params);
    for (auto& row : table) {
        row.name = r.str();
        for (int& d : row.shape) d = r.i32();
    }
    for (uint32_t i = 0; i < n_params; ++i) {
        const auto& spec = expected[i / 2];
        const bool is_bias = (i % 2) == 1;
        const std::string want_name = spec.name + (is_bias ? ".b" : ".k");
        const std::array<int, 4> want_shape =
            is_bias ? std::array<int, 4>{1, spec.bias_ch, 1, 1} : spec.kshape;
        if (table[i].name != want_name || table[i].shape != want_shape)
            throw IoError(IoError::Kind::shape_table,
                          "shape table entry '" + table[i].name + "' does not match config ('" +
                              want_name + "')");
    }

    for (const auto& row : table) {
        Tensor4 w(row.shape[0], row.shape[1], row.shape[2], row.shape[3]);
        for (auto& v : w.data) v = static_cast<double>(r.f32());
        model.params.add(row.name, std::move(w));
    }
    return model;
}

} // namespace aide
