#include "bknet/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace bknet {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'B', 'K', 'N', 'E', 'T', 'v', '0', '1'};

std::uint32_t crc_table_entry(std::uint32_t i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
    return c;
}

const std::uint32_t* crc_table() {
    static std::uint32_t table[256];
    static bool init = [] {
        for (std::uint32_t i = 0; i < 256; ++i) table[i] = crc_table_entry(i);
        return true;
    }();
    (void)init;
    return table;
}

class ByteWriter {
public:
    std::vector<std::uint8_t> bytes;

    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void floats(const std::vector<float>& v) {
        for (float x : v) f32(x);
    }
    void tensor(const Tensor& t) {
        for (float x : t.data) f32(x);
    }
    void bits(const std::vector<std::uint8_t>& flags) {
        std::uint8_t acc = 0;
        int fill = 0;
        for (std::uint8_t f : flags) {
            if (f) acc |= std::uint8_t(1u << fill);
            if (++fill == 8) {
                bytes.push_back(acc);
                acc = 0;
                fill = 0;
            }
        }
        if (fill) bytes.push_back(acc);
    }
};

class ByteReader {
public:
    ByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}

    std::size_t remaining() const { return n_ - pos_; }

    void need(std::size_t n) const {
        if (remaining() < n)
            throw ModelIoError(ModelIoError::Kind::Checksum, "model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p_[pos_++]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::vector<float> floats(std::size_t n) {
        std::vector<float> out(n);
        for (auto& x : out) x = f32();
        return out;
    }
    Tensor tensor(std::vector<int> shape) {
        Tensor t(shape);
        for (auto& x : t.data) x = f32();
        return t;
    }
    std::vector<std::uint8_t> bits(std::size_t count) {
        const std::size_t nbytes = (count + 7) / 8;
        need(nbytes);
        std::vector<std::uint8_t> out(count);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = (p_[pos_ + i / 8] >> (i % 8)) & 1u;
        pos_ += nbytes;
        return out;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
        pos_ += n;
        return s;
    }

private:
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

json tensor_shape_json(const Tensor& t) { return json(t.shape); }

json layer_header(const LayerSpec& layer) {
    json j;
    j["kind"] = kind_name(kind_of(layer));
    switch (kind_of(layer)) {
        case LayerKind::Conv: {
            const auto& l = std::get<ConvLayer>(layer);
            j["weight"] = tensor_shape_json(l.weight);
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        }
        case LayerKind::DecomposedConv: {
            const auto& l = std::get<DecomposedConvLayer>(layer);
            j["basis"] = tensor_shape_json(l.basis);
            j["coeff"] = tensor_shape_json(l.coeff);
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["kernel"] = l.kernel;
            j["d"] = l.d;
            j["centered"] = l.centered;
            break;
        }
        case LayerKind::Linear: {
            const auto& l = std::get<LinearLayer>(layer);
            j["weight"] = tensor_shape_json(l.weight);
            break;
        }
        case LayerKind::MaxPool: {
            const auto& l = std::get<MaxPoolLayer>(layer);
            j["window"] = l.window;
            j["stride"] = l.stride;
            break;
        }
        case LayerKind::AvgPool: {
            const auto& l = std::get<AvgPoolLayer>(layer);
            j["window"] = l.window;
            j["stride"] = l.stride;
            break;
        }
        case LayerKind::BatchNorm: {
            const auto& l = std::get<BatchNormLayer>(layer);
            j["channels"] = l.channels();
            j["eps"] = double(l.eps);
            j["momentum"] = double(l.momentum);
            break;
        }
        default: break;
    }
    return j;
}

void write_layer_payload(ByteWriter& w, const LayerSpec& layer) {
    switch (kind_of(layer)) {
        case LayerKind::Conv: {
            const auto& l = std::get<ConvLayer>(layer);
            w.tensor(l.weight);
            w.floats(l.bias);
            break;
        }
        case LayerKind::DecomposedConv: {
            const auto& l = std::get<DecomposedConvLayer>(layer);
            w.tensor(l.basis);
            w.tensor(l.coeff);
            w.floats(l.bias);
            w.bits(l.mask);
            break;
        }
        case LayerKind::Linear: {
            const auto& l = std::get<LinearLayer>(layer);
            w.tensor(l.weight);
            w.floats(l.bias);
            break;
        }
        case LayerKind::BatchNorm: {
            const auto& l = std::get<BatchNormLayer>(layer);
            w.floats(l.gamma);
            w.floats(l.beta);
            w.floats(l.running_mean);
            w.floats(l.running_var);
            break;
        }
        default: break;
    }
}

std::vector<int> shape_from_json(const json& j) {
    std::vector<int> s;
    for (const auto& v : j) s.push_back(v.get<int>());
    return s;
}

LayerSpec read_layer(const json& j, ByteReader& r) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "Conv") {
        ConvLayer l;
        l.weight = r.tensor(shape_from_json(j.at("weight")));
        l.bias = r.floats(std::size_t(l.weight.shape[0]));
        l.stride = j.at("stride").get<int>();
        l.padding = j.at("padding").get<int>();
        return l;
    }
    if (kind == "DecomposedConv") {
        DecomposedConvLayer l;
        l.basis = r.tensor(shape_from_json(j.at("basis")));
        l.coeff = r.tensor(shape_from_json(j.at("coeff")));
        l.bias = r.floats(std::size_t(l.coeff.shape[0]));
        l.mask = r.bits(l.coeff.numel());
        l.stride = j.at("stride").get<int>();
        l.padding = j.at("padding").get<int>();
        l.kernel = j.at("kernel").get<int>();
        l.d = j.at("d").get<int>();
        l.centered = j.at("centered").get<bool>();
        return l;
    }
    if (kind == "Linear") {
        LinearLayer l;
        l.weight = r.tensor(shape_from_json(j.at("weight")));
        l.bias = r.floats(std::size_t(l.weight.shape[0]));
        return l;
    }
    if (kind == "ReLU") return ReluLayer{};
    if (kind == "MaxPool") {
        MaxPoolLayer l;
        l.window = j.at("window").get<int>();
        l.stride = j.at("stride").get<int>();
        return l;
    }
    if (kind == "AvgPool") {
        AvgPoolLayer l;
        l.window = j.at("window").get<int>();
        l.stride = j.at("stride").get<int>();
        return l;
    }
    if (kind == "BatchNorm") {
        const std::size_t c = j.at("channels").get<std::size_t>();
        BatchNormLayer l;
        l.gamma = r.floats(c);
        l.beta = r.floats(c);
        l.running_mean = r.floats(c);
        l.running_var = r.floats(c);
        l.eps = float(j.at("eps").get<double>());
        l.momentum = float(j.at("momentum").get<double>());
        return l;
    }
    if (kind == "GlobalAvgPool") return GlobalAvgPoolLayer{};
    throw ModelIoError(ModelIoError::Kind::Parse, "unknown layer kind '" + kind + "'");
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    const std::uint32_t* table = crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> serialize_model(const Network& net) {
    json header;
    header["input_shape"] = {net.input_shape[0], net.input_shape[1], net.input_shape[2]};
    header["num_classes"] = net.num_classes;
    json layers = json::array();
    for (const auto& layer : net.layers) layers.push_back(layer_header(layer));
    header["layers"] = layers;
    json skips = json::array();
    for (const auto& edge : net.skips) {
        json e;
        e["src"] = edge.src;
        e["dst"] = edge.dst;
        e["projection"] = bool(edge.projection);
        if (edge.projection) {
            e["weight"] = tensor_shape_json(edge.projection->weight);
            e["stride"] = edge.projection->stride;
            e["padding"] = edge.projection->padding;
        }
        skips.push_back(e);
    }
    header["skips"] = skips;

    const std::string htext = header.dump();

    ByteWriter w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(std::uint32_t(htext.size()));
    w.raw(htext.data(), htext.size());
    for (const auto& layer : net.layers) write_layer_payload(w, layer);
    for (const auto& edge : net.skips)
        if (edge.projection) {
            w.tensor(edge.projection->weight);
            w.floats(edge.projection->bias);
        }
    w.u32(crc32(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

Network deserialize_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof(kMagic) + 8)
        throw ModelIoError(ModelIoError::Kind::Checksum, "model file truncated");
    if (std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw ModelIoError(ModelIoError::Kind::Version, "not a BKNET model file");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw ModelIoError(ModelIoError::Kind::Version, "unsupported BKNET format version");

    const std::size_t body_len = bytes.size() - 4;
    const std::uint32_t stored = std::uint32_t(bytes[body_len]) |
                                 std::uint32_t(bytes[body_len + 1]) << 8 |
                                 std::uint32_t(bytes[body_len + 2]) << 16 |
                                 std::uint32_t(bytes[body_len + 3]) << 24;
    if (crc32(bytes.data(), body_len) != stored)
        throw ModelIoError(ModelIoError::Kind::Checksum, "model checksum mismatch");

    ByteReader r(bytes.data(), body_len);
    r.str(sizeof(kMagic));
    const std::uint32_t hlen = r.u32();
    json header;
    try {
        header = json::parse(r.str(hlen));
    } catch (const json::exception& e) {
        throw ModelIoError(ModelIoError::Kind::Parse, std::string("bad model header: ") + e.what());
    }

    try {
        Network net;
        const auto& ishape = header.at("input_shape");
        net.input_shape = {ishape.at(0).get<int>(), ishape.at(1).get<int>(),
                           ishape.at(2).get<int>()};
        net.num_classes = header.at("num_classes").get<int>();
        for (const auto& lj : header.at("layers")) net.layers.push_back(read_layer(lj, r));
        for (const auto& ej : header.at("skips")) {
            SkipEdge edge;
            edge.src = ej.at("src").get<int>();
            edge.dst = ej.at("dst").get<int>();
            net.skips.push_back(edge);
        }
        std::size_t e = 0;
        for (const auto& ej : header.at("skips")) {
            if (ej.at("projection").get<bool>()) {
                ConvLayer p;
                p.weight = r.tensor(shape_from_json(ej.at("weight")));
                p.bias = r.floats(std::size_t(p.weight.shape[0]));
                p.stride = ej.at("stride").get<int>();
                p.padding = ej.at("padding").get<int>();
                net.skips[e].projection = std::move(p);
            }
            ++e;
        }
        return net;
    } catch (const json::exception& e) {
        throw ModelIoError(ModelIoError::Kind::Parse, std::string("bad model header: ") + e.what());
    }
}

void save_model(const Network& net, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_model(net);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ModelIoError(ModelIoError::Kind::Io, "cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw ModelIoError(ModelIoError::Kind::Io, "write failed for '" + path + "'");
}

Network load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ModelIoError(ModelIoError::Kind::Io, "cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace bknet
