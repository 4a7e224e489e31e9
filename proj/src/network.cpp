#include "lipens/network.hpp"

#include "lipens/errors.hpp"
#include "lipens/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace lipens {

namespace {

constexpr char kMagic[8] = {'L', 'I', 'P', 'E', 'N', 'S', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxLayers = 4096;
constexpr std::uint32_t kMaxDim = 1u << 24;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("network file: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_block(std::ostream& out, const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &p[i], 8);
    unsigned char b[8];
    for (int j = 0; j < 8; ++j) b[j] = static_cast<unsigned char>((bits >> (8 * j)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_f64_block(std::istream& in, double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError("network file: truncated payload");
    std::uint64_t bits = 0;
    for (int j = 0; j < 8; ++j) bits |= static_cast<std::uint64_t>(b[j]) << (8 * j);
    std::memcpy(&p[i], &bits, 8);
  }
}

}  // namespace

Index Network::input_dim() const {
  if (layers.empty()) throw DimensionError("Network: no layers");
  return layers.front().in_dim();
}

Index Network::output_dim() const {
  if (layers.empty()) throw DimensionError("Network: no layers");
  return layers.back().out_dim();
}

void Network::validate() const {
  if (layers.empty()) throw DimensionError("Network: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.weights.rank() != 2 || l.bias.rank() != 1)
      throw DimensionError("Network: layer " + std::to_string(i) + " has malformed tensors");
    if (l.bias.size() != l.out_dim())
      throw DimensionError("Network: layer " + std::to_string(i) + " bias/weight mismatch");
    if (i > 0 && l.in_dim() != layers[i - 1].out_dim())
      throw DimensionError("Network: layer " + std::to_string(i) + " does not chain with layer " +
                           std::to_string(i - 1));
    if (!l.weights.all_finite() || !l.bias.all_finite())
      throw NumericalError("Network: layer " + std::to_string(i) + " has non-finite parameters");
  }
}

Tensor forward(const Network& net, const Tensor& x) {
  if (net.layers.empty()) throw DimensionError("forward: empty network");
  const Index d = net.input_dim();
  const Index in_width = (x.rank() == 2) ? x.cols() : x.size();
  if (in_width != d)
    throw DimensionError("forward: input width " + std::to_string(in_width) +
                         " does not match network input " + std::to_string(d));

  Tensor h = x;
  for (const DenseLayer& l : net.layers) {
    Tensor z;
    if (h.rank() == 1) {
      z = matmul(l.weights, h);
      z.vec() += l.bias.vec();
    } else {
      z = Tensor::zeros(h.rows(), l.out_dim());
      z.mat().noalias() = h.mat() * l.weights.mat().transpose();
      z.mat().rowwise() += l.bias.vec().transpose();
    }
    h = (l.activation == Activation::ReLU) ? relu(z) : std::move(z);
  }
  return h;
}

ad::Var forward(ad::Graph& g, const Network& net, ad::Var x) {
  if (net.layers.empty()) throw DimensionError("forward: empty network");
  ad::Var h = x;
  for (const DenseLayer& l : net.layers) {
    ad::Var z = ad::affine(h, g.constant(l.weights), g.constant(l.bias));
    h = (l.activation == Activation::ReLU) ? ad::relu(z) : z;
  }
  return h;
}

ad::Var forward(ad::Graph& g, const Network& net, ad::Var x, NetworkParams& params) {
  if (net.layers.empty()) throw DimensionError("forward: empty network");
  params.layers.clear();
  ad::Var h = x;
  for (const DenseLayer& l : net.layers) {
    ad::Var w = g.input(l.weights);
    ad::Var b = g.input(l.bias);
    params.layers.emplace_back(w, b);
    ad::Var z = ad::affine(h, w, b);
    h = (l.activation == Activation::ReLU) ? ad::relu(z) : z;
  }
  return h;
}

double cross_entropy(const Tensor& logits, int label) {
  if (logits.rank() != 1 || logits.size() == 0)
    throw DimensionError("cross_entropy: logits must be a nonempty vector");
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range [0, " + std::to_string(logits.size()) + ")");
  const double m = logits.vec().maxCoeff();
  const double lse = m + std::log((logits.vec().array() - m).exp().sum());
  return lse - logits.vec()[label];
}

Network make_fnn_layers(int n_layers, Index input_dim, Index classes,
                        Index hidden_width, std::uint64_t seed) {
  if (n_layers < 1) throw std::invalid_argument("make_fnn_layers: need at least one layer");
  if (input_dim < 1 || classes < 1 || hidden_width < 1)
    throw DimensionError("make_fnn_layers: dimensions must be positive");

  Network net;
  Rng rng(Rng::derive(seed, 0x6e657477ull));  // independent stream per network
  for (int i = 0; i < n_layers; ++i) {
    const Index in = (i == 0) ? input_dim : hidden_width;
    const Index out = (i == n_layers - 1) ? classes : hidden_width;
    DenseLayer l;
    l.weights = Tensor::zeros(out, in);
    const double sigma = std::sqrt(2.0 / static_cast<double>(in));
    for (Index j = 0; j < l.weights.size(); ++j) l.weights.data()[j] = sigma * rng.normal();
    l.bias = Tensor::zeros(out);
    l.activation = (i == n_layers - 1) ? Activation::Identity : Activation::ReLU;
    net.layers.push_back(std::move(l));
  }
  return net;
}

Network make_fnn(const std::string& arch, Index input_dim, Index classes,
                 Index hidden_width, std::uint64_t seed) {
  int n_layers = 0;
  if (arch == "fnn2") n_layers = 2;
  else if (arch == "fnn4") n_layers = 4;
  else if (arch == "fnn5") n_layers = 5;
  else throw std::invalid_argument("make_fnn: unknown architecture '" + arch +
                                   "' (expected fnn2|fnn4|fnn5)");
  return make_fnn_layers(n_layers, input_dim, classes, hidden_width, seed);
}

void save_network(const Network& net, std::ostream& out) {
  net.validate();
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const DenseLayer& l : net.layers) {
    write_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    write_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    const unsigned char act = static_cast<unsigned char>(l.activation);
    out.write(reinterpret_cast<const char*>(&act), 1);
  }
  for (const DenseLayer& l : net.layers) {
    write_f64_block(out, l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    write_f64_block(out, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  if (!out) throw ParseError("save_network: write failed");
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("save_network: cannot open '" + path + "'");
  save_network(net, f);
}

Network load_network(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw ParseError("network file: bad magic");
  const std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw ParseError("network file: unsupported version " + std::to_string(version));
  const std::uint32_t n_layers = read_u32(in);
  if (n_layers == 0 || n_layers > kMaxLayers)
    throw ParseError("network file: implausible layer count " + std::to_string(n_layers));

  struct Header {
    std::uint32_t out, in;
    unsigned char act;
  };
  std::vector<Header> headers(n_layers);
  for (Header& h : headers) {
    h.out = read_u32(in);
    h.in = read_u32(in);
    if (!in.read(reinterpret_cast<char*>(&h.act), 1))
      throw ParseError("network file: truncated header");
    if (h.out == 0 || h.in == 0 || h.out > kMaxDim || h.in > kMaxDim)
      throw ParseError("network file: implausible layer dimensions");
    if (h.act > 1) throw ParseError("network file: unknown activation code");
  }
  for (std::size_t i = 1; i < headers.size(); ++i) {
    if (headers[i].in != headers[i - 1].out)
      throw ParseError("network file: declared layer dimensions do not chain");
  }

  Network net;
  for (const Header& h : headers) {
    DenseLayer l;
    l.weights = Tensor::zeros(static_cast<Index>(h.out), static_cast<Index>(h.in));
    l.bias = Tensor::zeros(static_cast<Index>(h.out));
    read_f64_block(in, l.weights.data(), static_cast<std::size_t>(l.weights.size()));
    read_f64_block(in, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    l.activation = static_cast<Activation>(h.act);
    net.layers.push_back(std::move(l));
  }
  for (const DenseLayer& l : net.layers) {
    if (!l.weights.all_finite() || !l.bias.all_finite())
      throw ParseError("network file: non-finite parameter payload");
  }
  return net;
}

Network load_network(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("load_network: cannot open '" + path + "'");
  return load_network(f);
}

}  // namespace lipens
