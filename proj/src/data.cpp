#include "lipens/data.hpp"

#include "lipens/errors.hpp"
#include "lipens/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace lipens {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(std::string("idx: truncated ") + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>((v >> 24) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>(v & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void LabeledDataset::validate() const {
  if (inputs.rank() != 2) throw DimensionError("LabeledDataset: inputs must be rank-2");
  if (static_cast<Index>(labels.size()) != inputs.rows())
    throw DimensionError("LabeledDataset: label count does not match input rows");
  if (class_count <= 0) throw DimensionError("LabeledDataset: class_count must be positive");
  for (int y : labels) {
    if (y < 0 || y >= class_count)
      throw DimensionError("LabeledDataset: label out of range");
  }
  if (!inputs.all_finite()) throw NumericalError("LabeledDataset: non-finite inputs");
}

Tensor LabeledDataset::row(Index i) const {
  if (i < 0 || i >= size()) throw DimensionError("LabeledDataset::row: index out of range");
  Tensor out = Tensor::zeros(dim());
  out.vec() = inputs.mat().row(i).transpose();
  return out;
}

LabeledDataset LabeledDataset::select(const std::vector<Index>& idx) const {
  LabeledDataset out;
  out.inputs = Tensor::zeros(static_cast<Index>(idx.size()), dim());
  out.labels.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= size())
      throw DimensionError("LabeledDataset::select: index out of range");
    out.inputs.mat().row(static_cast<Index>(r)) = inputs.mat().row(idx[r]);
    out.labels.push_back(labels[static_cast<std::size_t>(idx[r])]);
  }
  out.class_count = class_count;
  out.split_tag = split_tag;
  return out;
}

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw ParseError("load_idx: cannot open '" + images_path + "'");
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw ParseError("load_idx: cannot open '" + labels_path + "'");

  const std::uint32_t img_magic = read_be_u32(img, "image magic");
  if (img_magic != kImagesMagic)
    throw ParseError("load_idx: bad image magic (expected 0x00000803)");
  const std::uint32_t n = read_be_u32(img, "image count");
  const std::uint32_t rows = read_be_u32(img, "image rows");
  const std::uint32_t cols = read_be_u32(img, "image cols");
  if (n == 0 || rows == 0 || cols == 0) throw ParseError("load_idx: empty image dimensions");

  const std::uint32_t lab_magic = read_be_u32(lab, "label magic");
  if (lab_magic != kLabelsMagic)
    throw ParseError("load_idx: bad label magic (expected 0x00000801)");
  const std::uint32_t n_labels = read_be_u32(lab, "label count");
  if (n_labels != n)
    throw ParseError("load_idx: image/label count mismatch (" + std::to_string(n) + " vs " +
                     std::to_string(n_labels) + ")");

  const std::size_t d = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> buf(d);
  LabeledDataset ds;
  ds.inputs = Tensor::zeros(static_cast<Index>(n), static_cast<Index>(d));
  ds.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(d)))
      throw ParseError("load_idx: truncated image payload at sample " + std::to_string(i));
    double* out = ds.inputs.data() + static_cast<std::size_t>(i) * d;
    for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<double>(buf[j]) / 255.0;
  }
  std::vector<unsigned char> raw(n);
  if (!lab.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n)))
    throw ParseError("load_idx: truncated label payload");

  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(raw[i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path, Index rows, Index cols) {
  ds.validate();
  if (rows * cols != ds.dim())
    throw DimensionError("save_idx: rows*cols must equal the dataset width");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw ParseError("save_idx: cannot open '" + images_path + "'");
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw ParseError("save_idx: cannot open '" + labels_path + "'");

  write_be_u32(img, kImagesMagic);
  write_be_u32(img, static_cast<std::uint32_t>(ds.size()));
  write_be_u32(img, static_cast<std::uint32_t>(rows));
  write_be_u32(img, static_cast<std::uint32_t>(cols));
  const std::size_t d = static_cast<std::size_t>(ds.dim());
  std::vector<unsigned char> buf(d);
  for (Index i = 0; i < ds.size(); ++i) {
    const double* p = ds.inputs.data() + static_cast<std::size_t>(i) * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double q = std::round(std::clamp(p[j], 0.0, 1.0) * 255.0);
      buf[j] = static_cast<unsigned char>(q);
    }
    img.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(d));
  }

  write_be_u32(lab, kLabelsMagic);
  write_be_u32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) {
    const unsigned char b = static_cast<unsigned char>(y);
    lab.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!img || !lab) throw ParseError("save_idx: write failed");
}

MnistData load_mnist_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  auto pick = [&dir](const char* dashed, const char* dotted) -> std::string {
    const fs::path a = fs::path(dir) / dashed;
    if (fs::exists(a)) return a.string();
    const fs::path b = fs::path(dir) / dotted;
    if (fs::exists(b)) return b.string();
    throw ParseError("load_mnist_dir: missing '" + std::string(dashed) + "' in " + dir);
  };
  MnistData out;
  out.train = load_idx(pick("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
                       pick("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"));
  out.train.split_tag = LabeledDataset::Split::Train;
  out.test = load_idx(pick("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
                      pick("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"));
  out.test.split_tag = LabeledDataset::Split::Test;
  return out;
}

LabeledDataset make_blobs(Index n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_blobs: need n >= 2");
  if (noise < 0) throw std::invalid_argument("make_blobs: negative noise");
  Rng rng(Rng::derive(seed, 0x626c6f62ull));
  LabeledDataset ds;
  ds.inputs = Tensor::zeros(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.class_count = 2;
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double cx = (y == 0) ? 0.3 : 0.7;
    const double cy = (y == 0) ? 0.3 : 0.7;
    ds.inputs.mat()(i, 0) = cx + noise * rng.normal();
    ds.inputs.mat()(i, 1) = cy + noise * rng.normal();
    ds.labels[static_cast<std::size_t>(i)] = y;
  }
  return ds;
}

LabeledDataset make_two_moons(Index n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_two_moons: need n >= 2");
  if (noise < 0) throw std::invalid_argument("make_two_moons: negative noise");
  Rng rng(Rng::derive(seed, 0x6d6f6f6eull));
  LabeledDataset ds;
  ds.inputs = Tensor::zeros(n, 2);
  ds.labels.resize(static_cast<std::size_t>(n));
  ds.class_count = 2;
  const double pi = 3.14159265358979323846;
  for (Index i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double t = pi * rng.uniform01();
    double px, py;
    if (y == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    px += noise * rng.normal();
    py += noise * rng.normal();
    // map the [-1, 2] x [-0.5, 1] envelope into the unit box
    ds.inputs.mat()(i, 0) = (px + 1.0) / 3.0;
    ds.inputs.mat()(i, 1) = (py + 0.5) / 1.5;
    ds.labels[static_cast<std::size_t>(i)] = y;
  }
  return ds;
}

SplitResult split(const LabeledDataset& ds, double f_train, double f_heldout, double f_test,
                  std::uint64_t seed) {
  ds.validate();
  if (f_train < 0 || f_heldout < 0 || f_test < 0 ||
      std::abs(f_train + f_heldout + f_test - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must be nonnegative and sum to 1");

  std::vector<Index> idx(static_cast<std::size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(Rng::derive(seed, 0x73706c69ull));
  rng.shuffle(idx);

  const auto n = static_cast<double>(ds.size());
  const Index c0 = static_cast<Index>(std::llround(n * f_train));
  const Index c1 = static_cast<Index>(std::llround(n * (f_train + f_heldout)));

  SplitResult out;
  out.train = ds.select({idx.begin(), idx.begin() + c0});
  out.heldout = ds.select({idx.begin() + c0, idx.begin() + c1});
  out.test = ds.select({idx.begin() + c1, idx.end()});
  out.train.split_tag = LabeledDataset::Split::Train;
  out.heldout.split_tag = LabeledDataset::Split::Heldout;
  out.test.split_tag = LabeledDataset::Split::Test;
  return out;
}

}  // namespace lipens
