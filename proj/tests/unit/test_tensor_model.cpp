#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "onespike/dataset.hpp"
#include "onespike/errors.hpp"
#include "onespike/forward.hpp"
#include "onespike/io.hpp"
#include "onespike/model.hpp"
#include "onespike/model_io.hpp"
#include "support.hpp"

namespace onespike {
namespace {

using testing::data_dir;
using testing::TempDir;

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

void write_f32(const std::filesystem::path& p, const std::vector<float>& v, std::size_t drop = 0) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float) - drop));
}

const char* kIdentityManifest = R"({
  "name": "identity", "input_shape": [2], "num_classes": 2,
  "layers": [{"kind": "Linear", "shape": [2, 2], "offset_bytes": 0, "length": 4}],
  "skip_edges": []
})";

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), Error);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.reshaped({6}).shape(), Shape({6}));
  EXPECT_THROW(t.reshaped({4}), Error);
}

TEST(Tensor, ChannelConvention) {
  const Shape chw{3, 2, 2};
  EXPECT_EQ(channel_count(chw), 3u);
  EXPECT_EQ(channel_of(chw, 5), 1u);
  const Shape flat{4};
  EXPECT_EQ(channel_count(flat), 4u);
  EXPECT_EQ(channel_of(flat, 3), 3u);
  const Shape nodes{5, 4};  // [nodes, features]: features are channels
  EXPECT_EQ(channel_of(nodes, 6), 2u);
}

TEST(ModelIo, IdentityManifestLoads) {
  TempDir dir;
  write_text(dir / "model.json", kIdentityManifest);
  write_f32(dir / "weights.bin", {1, 0, 0, 1});
  const AnnModel m = load_model(dir.path());
  ASSERT_EQ(m.layers.size(), 1u);
  EXPECT_EQ(m.layers[0].kind, LayerKind::kLinear);
  EXPECT_EQ(m.layers[0].weights->data(), std::vector<double>({1, 0, 0, 1}));
  EXPECT_EQ(predict_logits(m, Tensor({2}, {3.0, -4.0})).data(), std::vector<double>({3.0, -4.0}));
}

TEST(ModelIo, ShortBlobNamesLayerZero) {
  TempDir dir;
  write_text(dir / "model.json", kIdentityManifest);
  write_f32(dir / "weights.bin", {1, 0, 0, 1}, 4);
  try {
    load_model(dir.path());
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
    EXPECT_EQ(e.code(), FormatCode::kShapeMismatch);
    ASSERT_TRUE(e.layer_index().has_value());
    EXPECT_EQ(*e.layer_index(), 0u);
  }
}

TEST(ModelIo, DistinctFormatErrors) {
  auto code_of = [](const std::string& manifest, const std::vector<float>& blob) {
    TempDir dir;
    write_text(dir / "model.json", manifest);
    write_f32(dir / "weights.bin", blob);
    try {
      load_model(dir.path());
    } catch (const Error& e) {
      return e.code();
    }
    return FormatCode::kNone;
  };
  EXPECT_EQ(code_of("{ not json", {}), FormatCode::kMalformedManifest);
  EXPECT_EQ(code_of(R"({"input_shape": [2], "layers": [{"kind": "Softmax"}]})", {}),
            FormatCode::kUnsupportedKind);
  EXPECT_EQ(code_of(kIdentityManifest, {1, NAN, 0, 1}), FormatCode::kNonFinite);
  EXPECT_EQ(code_of(R"({"input_shape": [3], "layers": [
      {"kind": "Linear", "shape": [2, 2], "offset_bytes": 0, "length": 4}]})",
                    {1, 0, 0, 1}),
            FormatCode::kShapeMismatch);
}

TEST(ModelIo, MissingFileIsIoError) {
  TempDir dir;
  try {
    load_model(dir.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(ModelIo, SaveLoadRoundTrip) {
  const AnnModel m = load_model(data_dir() / "cnn");
  TempDir dir;
  save_model(m, dir.path(), BlobType::kF64);
  const AnnModel back = load_model(dir.path());
  ASSERT_EQ(back.layers.size(), m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].kind, m.layers[i].kind);
    EXPECT_EQ(back.layers[i].weights, m.layers[i].weights);
    EXPECT_EQ(back.layers[i].bias, m.layers[i].bias);
    EXPECT_EQ(back.layers[i].bn, m.layers[i].bn);
    EXPECT_EQ(back.layers[i].geometry, m.layers[i].geometry);
  }
}

// Exported fixtures carry the framework's logits and predictions.
void check_reference(const std::string& name, const std::string& batch) {
  const AnnModel m = load_model(data_dir() / name);
  const auto inputs = load_batch(data_dir() / "digits" / (batch + ".bin"));
  const auto ref = load_batch(data_dir() / name / "reference_logits.bin");
  ASSERT_EQ(inputs.size(), ref.size());
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const Tensor got = predict_logits(m, inputs[s]);
    double scale = 0.0;
    for (double v : ref[s].values()) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < got.size(); ++k)
      ASSERT_NEAR(got[k], ref[s][k], 1e-4 * scale) << name << " sample " << s << " logit " << k;
    EXPECT_EQ(argmax_class(got), argmax_class(ref[s])) << name << " sample " << s;
  }
}

TEST(ModelIo, ExportedMlpMatchesReferenceLogits) { check_reference("mlp", "test_flat"); }
TEST(ModelIo, ExportedCnnMatchesReferenceLogits) { check_reference("cnn", "test"); }

TEST(Model, ValidateRejectsTrailingRelu) {
  AnnModel m;
  m.input_shape = {2};
  m.layers = {Layer::linear(Tensor({2, 2}, {1, 0, 0, 1}), std::nullopt), Layer::relu()};
  EXPECT_THROW(validate(m), Error);
  m.layers.pop_back();
  EXPECT_NO_THROW(validate(m));
}

TEST(Model, ValidateRejectsReluAfterPool) {
  AnnModel m;
  m.input_shape = {1, 4, 4};
  m.layers = {Layer::max_pool(2), Layer::relu(), Layer::flatten(),
              Layer::linear(Tensor({1, 4}, 1.0), std::nullopt)};
  EXPECT_THROW(validate(m), Error);
}

TEST(Model, ValidateRejectsNonPositiveVariance) {
  AnnModel m;
  m.input_shape = {1};
  m.layers = {Layer::linear(Tensor({1, 1}, 1.0), std::nullopt),
              Layer::batch_norm({{1.0}, {0.0}, {0.0}, {0.0}}), Layer::relu(),
              Layer::linear(Tensor({1, 1}, 1.0), std::nullopt)};
  EXPECT_THROW(validate(m), Error);
}

TEST(Model, InferShapes) {
  AnnModel m;
  m.input_shape = {3, 16, 16};
  m.layers = {Layer::conv2d(Tensor({8, 3, 3, 3}), std::nullopt, 1, 1), Layer::relu(),
              Layer::max_pool(2), Layer::avg_pool(2), Layer::flatten(),
              Layer::linear(Tensor({10, 128}), std::nullopt)};
  const auto shapes = infer_shapes(m);
  EXPECT_EQ(shapes[0], Shape({8, 16, 16}));
  EXPECT_EQ(shapes[2], Shape({8, 8, 8}));
  EXPECT_EQ(shapes[3], Shape({8, 4, 4}));
  EXPECT_EQ(shapes[4], Shape({128}));
  EXPECT_EQ(shapes[5], Shape({10}));
}

TEST(Csr, DenseRoundTrip) {
  const std::vector<double> dense{0, 2, 0, 1, 0, 3};
  const CsrMatrix m = CsrMatrix::from_dense(2, 3, dense);
  EXPECT_EQ(m.nnz(), 3u);
  EXPECT_EQ(m.row_ptr, std::vector<std::size_t>({0, 1, 3}));
  EXPECT_EQ(m.to_dense(), dense);
}

}  // namespace
}  // namespace onespike
