#include <cstdio>
#include <filesystem>

#include "bknet/decompose.hpp"
#include "bknet/serialize.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace bknet;
using namespace bknet::testing;

namespace {

Network model_with_everything(Rng& rng) {
    Network net;
    net.input_shape = {3, 8, 8};
    net.num_classes = 4;
    net.layers.push_back(random_conv(8, 3, 3, rng));
    net.layers.push_back(make_batchnorm(8));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(random_conv(8, 8, 3, rng));
    net.layers.push_back(make_batchnorm(8));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPoolLayer{2, 2});
    net.layers.push_back(AvgPoolLayer{2, 2});
    net.layers.push_back(GlobalAvgPoolLayer{});
    net.layers.push_back(random_linear(4, 8, rng));
    net.skips.push_back({2, 4, std::nullopt});
    ConvLayer proj = random_conv(8, 8, 1, rng, 1, 0);
    net.skips.push_back({0, 1, proj});
    // decompose one conv so masks get exercised
    net = decompose_network(net, {{3, 5}});
    auto& dec = std::get<DecomposedConvLayer>(net.layers[3]);
    dec.mask[7] = 0;
    dec.coeff.data[7] = 0.0f;
    return net;
}

}  // namespace

TEST_CASE("save/load round-trip is bit-identical") {
    Rng rng(21);
    Network net = model_with_everything(rng);
    auto bytes = serialize_model(net);
    Network back = deserialize_model(bytes);
    auto bytes2 = serialize_model(back);
    CHECK(bytes == bytes2);

    // structural spot checks
    REQUIRE(back.layers.size() == net.layers.size());
    const auto& a = std::get<DecomposedConvLayer>(net.layers[3]);
    const auto& b = std::get<DecomposedConvLayer>(back.layers[3]);
    CHECK(a.coeff.data == b.coeff.data);
    CHECK(a.basis.data == b.basis.data);
    CHECK(a.mask == b.mask);
    CHECK(a.d == b.d);
    REQUIRE(back.skips.size() == 2);
    CHECK(back.skips[1].projection->weight.data == net.skips[1].projection->weight.data);

    // forward outputs preserved bit-exactly
    Tensor in = random_batch(net, 2, rng);
    CHECK(forward(net, in).data == forward(back, in).data);
}

TEST_CASE("file round-trip through disk") {
    Rng rng(23);
    Network net = model_with_everything(rng);
    const std::string path = std::filesystem::temp_directory_path() / "bknet_test_model.bknet";
    save_model(net, path);
    Network back = load_model(path);
    CHECK(serialize_model(net) == serialize_model(back));
    std::remove(path.c_str());
}

TEST_CASE("truncated file raises a checksum error") {
    Rng rng(25);
    Network net = model_with_everything(rng);
    auto bytes = serialize_model(net);
    bytes.resize(bytes.size() - 9);
    try {
        deserialize_model(bytes);
        FAIL("expected ModelIoError");
    } catch (const ModelIoError& e) {
        CHECK(e.kind == ModelIoError::Kind::Checksum);
    }
}

TEST_CASE("corrupted payload raises a checksum error") {
    Rng rng(27);
    Network net = model_with_everything(rng);
    auto bytes = serialize_model(net);
    bytes[bytes.size() / 2] ^= 0x40;
    try {
        deserialize_model(bytes);
        FAIL("expected ModelIoError");
    } catch (const ModelIoError& e) {
        CHECK(e.kind == ModelIoError::Kind::Checksum);
    }
}

TEST_CASE("unknown version byte raises a version error") {
    Rng rng(29);
    Network net = model_with_everything(rng);
    auto bytes = serialize_model(net);
    bytes[7] = '2';  // BKNETv02
    try {
        deserialize_model(bytes);
        FAIL("expected ModelIoError");
    } catch (const ModelIoError& e) {
        CHECK(e.kind == ModelIoError::Kind::Version);
    }
}

TEST_CASE("missing file raises an io error") {
    try {
        load_model("/nonexistent/path/model.bknet");
        FAIL("expected ModelIoError");
    } catch (const ModelIoError& e) {
        CHECK(e.kind == ModelIoError::Kind::Io);
    }
}
