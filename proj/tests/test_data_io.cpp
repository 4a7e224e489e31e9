#include "lipens/data.hpp"
#include "lipens/errors.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

using namespace lipens;

TEST_SUITE_BEGIN("data_io");

namespace {

LabeledDataset quantized_fixture(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  ds.inputs = Tensor::zeros(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.class_count = 3;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      // values on the exact 1/255 grid so quantization is lossless
      ds.inputs.mat()(i, j) = static_cast<double>(rng.uniform_int(256)) / 255.0;
    }
    ds.labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(3));
  }
  return ds;
}

}  // namespace

TEST_CASE("idx round trip reproduces the dataset exactly") {
  LabeledDataset ds = quantized_fixture(23, 6, 1);
  test::TempDir dir("idx");
  const std::string img = dir.file("images-idx3-ubyte");
  const std::string lab = dir.file("labels-idx1-ubyte");
  save_idx(ds, img, lab, 2, 3);
  LabeledDataset back = load_idx(img, lab);

  REQUIRE(back.size() == ds.size());
  REQUIRE(back.dim() == ds.dim());
  CHECK(back.labels == ds.labels);
  CHECK((back.inputs.vec() - ds.inputs.vec()).cwiseAbs().maxCoeff() == 0.0);
  for (Index i = 0; i < back.inputs.size(); ++i) {
    CHECK(back.inputs.data()[i] >= 0.0);
    CHECK(back.inputs.data()[i] <= 1.0);
  }
}

TEST_CASE("idx loader rejects malformed files") {
  LabeledDataset ds = quantized_fixture(5, 4, 2);
  test::TempDir dir("idxbad");
  const std::string img = dir.file("images");
  const std::string lab = dir.file("labels");
  save_idx(ds, img, lab, 1, 4);

  // labels file passed where images are expected: wrong magic
  CHECK_THROWS_AS(load_idx(lab, img), ParseError);

  {
    // truncated image payload
    std::ifstream in(img, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir.file("trunc"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    out.close();
    CHECK_THROWS_AS(load_idx(dir.file("trunc"), lab), ParseError);
  }
  {
    // count mismatch between image and label headers
    LabeledDataset small = quantized_fixture(4, 4, 3);
    save_idx(small, dir.file("img4"), dir.file("lab4"), 1, 4);
    CHECK_THROWS_AS(load_idx(img, dir.file("lab4")), ParseError);
  }
}

TEST_CASE("zero pixels scale to exactly zero") {
  LabeledDataset ds;
  ds.inputs = Tensor::zeros(2, 3);
  ds.labels = {0, 1};
  ds.class_count = 2;
  test::TempDir dir("idxzero");
  save_idx(ds, dir.file("i"), dir.file("l"), 1, 3);
  LabeledDataset back = load_idx(dir.file("i"), dir.file("l"));
  CHECK(back.inputs.vec().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("blobs are deterministic, balanced and separable at zero noise") {
  LabeledDataset a = make_blobs(101, 0.05, 7);
  LabeledDataset b = make_blobs(101, 0.05, 7);
  CHECK(a.inputs.vec() == b.inputs.vec());
  CHECK(a.labels == b.labels);

  int n0 = 0, n1 = 0;
  for (int y : a.labels) (y == 0 ? n0 : n1)++;
  CHECK(std::abs(n0 - n1) <= 1);

  // noise-free blobs sit exactly on their centers: the line x+y=1 separates
  LabeledDataset clean = make_blobs(40, 0.0, 3);
  for (Index i = 0; i < clean.size(); ++i) {
    const double s = clean.inputs.mat()(i, 0) + clean.inputs.mat()(i, 1);
    if (clean.labels[static_cast<std::size_t>(i)] == 0) CHECK(s < 1.0);
    else CHECK(s > 1.0);
  }

  CHECK_THROWS_AS(make_blobs(1, 0.1, 0), std::invalid_argument);
}

TEST_CASE("two moons are deterministic and balanced") {
  LabeledDataset a = make_two_moons(64, 0.02, 9);
  LabeledDataset b = make_two_moons(64, 0.02, 9);
  CHECK(a.inputs.vec() == b.inputs.vec());
  int n0 = 0, n1 = 0;
  for (int y : a.labels) (y == 0 ? n0 : n1)++;
  CHECK(std::abs(n0 - n1) <= 1);
  CHECK(a.class_count == 2);
}

TEST_CASE("split is disjoint, exhaustive and deterministic") {
  LabeledDataset ds = quantized_fixture(10, 2, 4);
  SplitResult s = split(ds, 0.6, 0.2, 0.2, 11);
  CHECK(s.train.size() == 6);
  CHECK(s.heldout.size() == 2);
  CHECK(s.test.size() == 2);
  CHECK(s.train.split_tag == LabeledDataset::Split::Train);
  CHECK(s.heldout.split_tag == LabeledDataset::Split::Heldout);
  CHECK(s.test.split_tag == LabeledDataset::Split::Test);

  // every source row appears exactly once across the three parts
  std::vector<int> seen;
  auto collect = [&seen, &ds](const LabeledDataset& part) {
    for (Index i = 0; i < part.size(); ++i) {
      for (Index j = 0; j < ds.size(); ++j) {
        if ((part.inputs.mat().row(i) - ds.inputs.mat().row(j)).cwiseAbs().maxCoeff() == 0.0 &&
            part.labels[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(j)]) {
          seen.push_back(static_cast<int>(j));
          break;
        }
      }
    }
  };
  collect(s.train);
  collect(s.heldout);
  collect(s.test);
  std::sort(seen.begin(), seen.end());
  REQUIRE(seen.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);

  SplitResult again = split(ds, 0.6, 0.2, 0.2, 11);
  CHECK(again.train.inputs.vec() == s.train.inputs.vec());

  SplitResult all_train = split(ds, 1.0, 0.0, 0.0, 5);
  CHECK(all_train.train.size() == 10);
  CHECK(all_train.heldout.size() == 0);

  CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 1), std::invalid_argument);
}

TEST_SUITE_END();
