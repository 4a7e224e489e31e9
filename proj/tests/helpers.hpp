#pragma once

#include "lipens/data.hpp"
#include "lipens/network.hpp"
#include "lipens/rng.hpp"
#include "lipens/tensor.hpp"

#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace lipens::test {

inline Tensor vec(std::initializer_list<double> v) {
  Tensor t = Tensor::zeros(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) t.data()[i++] = x;
  return t;
}

inline Tensor mat(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.begin()->size());
  Tensor t = Tensor::zeros(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double x : row) t.mat()(i, j++) = x;
    ++i;
  }
  return t;
}

inline DenseLayer layer(Tensor w, Tensor b, Activation act) {
  DenseLayer l;
  l.weights = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return l;
}

/// Single affine layer, identity activation: f(x) = W x.
inline Network linear_net(Tensor w) {
  Network net;
  const Index out = w.rows();
  net.layers.push_back(layer(std::move(w), Tensor::zeros(out), Activation::Identity));
  return net;
}

/// f(x) = c for all x (zero weights, bias c).
inline Network constant_net(Index input_dim, Tensor bias) {
  Network net;
  const Index out = bias.size();
  net.layers.push_back(
      layer(Tensor::zeros(out, input_dim), std::move(bias), Activation::Identity));
  return net;
}

/// f(x) = x.
inline Network identity_net(Index d) {
  Tensor eye = Tensor::zeros(d, d);
  eye.mat().setIdentity();
  return linear_net(std::move(eye));
}

inline Tensor random_tensor(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Tensor t = Tensor::zeros(rows, cols);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

inline Tensor random_vector(Rng& rng, Index n, double scale = 1.0) {
  Tensor t = Tensor::zeros(n);
  for (Index i = 0; i < n; ++i) t.data()[i] = scale * rng.normal();
  return t;
}

/// Random ReLU network with the given layer widths (first entry is the input
/// dimension), identity on the final layer.
inline Network random_net(Rng& rng, const std::vector<Index>& widths, double scale = 0.7) {
  Network net;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const bool last = (i + 1 == widths.size());
    net.layers.push_back(layer(random_tensor(rng, widths[i], widths[i - 1], scale),
                               random_vector(rng, widths[i], 0.1 * scale),
                               last ? Activation::Identity : Activation::ReLU));
  }
  return net;
}

/// Central finite differences of a scalar function of several tensors.
inline std::vector<Tensor> fd_gradient(
    const std::function<double(const std::vector<Tensor>&)>& f, std::vector<Tensor> leaves,
    double h = 1e-5) {
  std::vector<Tensor> grads;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor g = Tensor::zeros_like(leaves[li]);
    for (Index i = 0; i < leaves[li].size(); ++i) {
      const double saved = leaves[li].data()[i];
      leaves[li].data()[i] = saved + h;
      const double up = f(leaves);
      leaves[li].data()[i] = saved - h;
      const double down = f(leaves);
      leaves[li].data()[i] = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// Fresh scratch directory under the system temp root.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("lipens-test-" + tag + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string path() const { return path_.string(); }

private:
  std::filesystem::path path_;
};

}  // namespace lipens::test
