#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace oracle {

Dense to_dense(const fedlora::Matrix& m) {
  Dense d(m.rows(), Flat(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

Flat to_flat(const fedlora::Vector& v) { return Flat(v.raw().begin(), v.raw().end()); }

fedlora::Matrix from_dense(const Dense& d) {
  const std::size_t cols = d.empty() ? 0 : d[0].size();
  fedlora::Matrix m(d.size(), cols);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = d[i][j];
  return m;
}

Dense mul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense c(n, Flat(m, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].size() != k) throw std::invalid_argument("oracle::mul shape");
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i][p] * b[p][j];
      c[i][j] = s;
    }
  }
  return c;
}

Dense transpose(const Dense& a) {
  const std::size_t cols = a.empty() ? 0 : a[0].size();
  Dense t(cols, Flat(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j][i] = a[i][j];
  return t;
}

Dense add(const Dense& a, const Dense& b, double sb) {
  Dense c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += sb * b[i][j];
  return c;
}

Dense outer(const Flat& a, const Flat& b) {
  Dense c(a.size(), Flat(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) c[i][j] = a[i] * b[j];
  return c;
}

double max_abs(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

namespace {

Flat plus(const Flat& a, const Flat& b) {
  Flat c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

// One step of both factors on upstream gradient g: returns B'·A'.
Dense stepped_product(const Dense& a, const Dense& b, const Flat& g, const Flat& u, double eta,
                      bool update_a) {
  const Dense gu = outer(g, u);
  const Dense grad_a = mul(transpose(b), gu);
  const Dense grad_b = mul(gu, transpose(a));
  const Dense a_new = update_a ? add(a, grad_a, -eta) : a;
  const Dense b_new = add(b, grad_b, -eta);
  return mul(b_new, a_new);
}

Flat matvec(const Dense& m, const Flat& x) {
  Flat y(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += m[i][j] * x[j];
  return y;
}

Flat matvec_t(const Dense& m, const Flat& x) {
  Flat y(m.empty() ? 0 : m[0].size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += m[i][j] * x[i];
  return y;
}

double act(fedlora::Activation kind, double x) {
  switch (kind) {
    case fedlora::Activation::Tanh:
      return std::tanh(x);
    case fedlora::Activation::Relu:
      return std::max(x, 0.0);
    case fedlora::Activation::Identity:
      return x;
  }
  return x;
}

double act_prime(fedlora::Activation kind, double x) {
  switch (kind) {
    case fedlora::Activation::Tanh:
      return 1.0 / (std::cosh(x) * std::cosh(x));
    case fedlora::Activation::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case fedlora::Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

struct Pass {
  std::vector<Flat> u;  // layer inputs
  std::vector<Flat> v;  // pre-activation outputs
  Flat z;
};

Pass run(const Network& net, const Flat& x) {
  Pass p;
  Flat h = matvec(net.embedding, x);
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    const Dense w_eff = add(net.w[i], mul(net.b[i], net.a[i]));
    Flat v = matvec(w_eff, h);
    p.u.push_back(h);
    p.v.push_back(v);
    if (i + 1 < net.w.size())
      for (double& e : v) e = act(net.act, e);
    h = v;
  }
  p.z = h;
  return p;
}

Flat softmax(const Network& net, const Flat& z) {
  Flat logits = matvec(net.head_w, z);
  double peak = -INFINITY;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    logits[c] += net.head_b[c];
    peak = std::max(peak, logits[c]);
  }
  double total = 0.0;
  for (double& l : logits) total += (l = std::exp(l - peak));
  for (double& l : logits) l /= total;
  return logits;
}

}  // namespace

DeltaW brute_delta_w(const Dense& a, const Dense& b, const Flat& g, const Flat& n, const Flat& u,
                     double eta, bool update_a) {
  const Dense before = mul(b, a);
  return {add(stepped_product(a, b, plus(g, n), u, eta, update_a), before, -1.0),
          add(stepped_product(a, b, g, u, eta, update_a), before, -1.0)};
}

Dense brute_delta_w_both(const Dense& a, const Dense& b, const Flat& g, const Flat& n,
                         const Flat& u, double eta) {
  const DeltaW d = brute_delta_w(a, b, g, n, u, eta, true);
  return add(d.noisy, d.clean, -1.0);
}

Dense brute_delta_w_fixed_a(const Dense& a, const Dense& b, const Flat& g, const Flat& n,
                            const Flat& u, double eta) {
  const DeltaW d = brute_delta_w(a, b, g, n, u, eta, false);
  return add(d.noisy, d.clean, -1.0);
}

MonteCarlo mc_noise_energy_fixed_a(const Dense& a, const Flat& u, std::size_t d_out, double sigma2,
                                   double eta, std::size_t samples, std::uint64_t seed) {
  if (sigma2 == 0.0) return {0.0, 0.0};
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(sigma2));
  const Flat p = matvec_t(a, matvec(a, u));
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double e = 0.0;
    Flat n(d_out);
    for (double& x : n) x = normal(gen);
    for (std::size_t i = 0; i < d_out; ++i)
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double entry = -eta * n[i] * p[j];
        e += entry * entry;
      }
    sum += e;
    sum_sq += e * e;
  }
  const double m = sum / static_cast<double>(samples);
  const double var = (sum_sq / static_cast<double>(samples) - m * m) *
                     static_cast<double>(samples) / static_cast<double>(samples - 1);
  return {m, std::sqrt(var / static_cast<double>(samples))};
}

Flat symmetric_eigenvalues(Dense s) {
  const std::size_t n = s.size();
  double total = 0.0;
  for (const auto& row : s)
    for (double v : row) total += v * v;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += s[p][q] * s[p][q];
    if (off <= 1e-36 * total) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(s[p][q]) < 1e-300) continue;
        const double theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double skp = s[k][p], skq = s[k][q];
          s[k][p] = c * skp - sn * skq;
          s[k][q] = sn * skp + c * skq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double spk = s[p][k], sqk = s[q][k];
          s[p][k] = c * spk - sn * sqk;
          s[q][k] = sn * spk + c * sqk;
        }
      }
    }
  }
  Flat eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = s[i][i];
  std::sort(eig.begin(), eig.end());
  return eig;
}

double condition_number(const Dense& j) {
  const Dense jt = transpose(j);
  const Dense gram = j.size() >= jt.size() ? mul(jt, j) : mul(j, jt);
  const Flat eig = symmetric_eigenvalues(gram);
  if (eig.front() <= 0.0) return INFINITY;
  return std::sqrt(eig.back() / eig.front());
}

Flat finite_diff(const std::function<double(const Flat&)>& f, const Flat& x, double h) {
  Flat grad(x.size());
  Flat probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Network to_network(const fedlora::SplitModel& model, const fedlora::TaskHead& head) {
  Network net;
  net.embedding = to_dense(model.embedding);
  for (std::size_t i = 0; i < model.layers(); ++i) {
    net.w.push_back(to_dense(model.encoder[i]));
    net.a.push_back(to_dense(model.adapters[i].a));
    net.b.push_back(to_dense(model.adapters[i].b));
  }
  net.head_w = to_dense(head.weight);
  net.head_b = to_flat(head.bias);
  net.act = model.activation;
  return net;
}

Flat forward_z(const Network& net, const Flat& x) { return run(net, x).z; }

double mean_loss(const Network& net, const Dense& x, const std::vector<std::size_t>& labels) {
  double total = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    const Flat p = softmax(net, run(net, x[s]).z);
    total -= std::log(p[labels[s]]);
  }
  return total / static_cast<double>(x.size());
}

NetworkGrads gradients(const Network& net, const Dense& x, const std::vector<std::size_t>& labels) {
  NetworkGrads g;
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    g.a.push_back(add(net.a[i], net.a[i], -1.0));
    g.b.push_back(add(net.b[i], net.b[i], -1.0));
  }
  g.head_w = add(net.head_w, net.head_w, -1.0);
  g.head_b = Flat(net.head_b.size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(x.size());

  for (std::size_t s = 0; s < x.size(); ++s) {
    const Pass p = run(net, x[s]);
    Flat dlogit = softmax(net, p.z);
    dlogit[labels[s]] -= 1.0;
    for (double& d : dlogit) d *= inv_m;
    g.head_w = add(g.head_w, outer(dlogit, p.z));
    for (std::size_t c = 0; c < dlogit.size(); ++c) g.head_b[c] += dlogit[c];

    Flat delta = matvec_t(net.head_w, dlogit);
    for (std::size_t i = net.w.size(); i-- > 0;) {
      const Flat au = matvec(net.a[i], p.u[i]);
      g.b[i] = add(g.b[i], outer(delta, au));
      g.a[i] = add(g.a[i], outer(matvec_t(net.b[i], delta), p.u[i]));
      if (i == 0) break;
      const Dense w_eff = add(net.w[i], mul(net.b[i], net.a[i]));
      Flat up = matvec_t(w_eff, delta);
      for (std::size_t k = 0; k < up.size(); ++k) up[k] *= act_prime(net.act, p.v[i - 1][k]);
      delta = up;
    }
  }
  return g;
}

void sgd_step(Network& net, const NetworkGrads& grads, double eta_adapters, double eta_head,
              bool update_a) {
  for (std::size_t i = 0; i < net.w.size(); ++i) {
    if (update_a) net.a[i] = add(net.a[i], grads.a[i], -eta_adapters);
    net.b[i] = add(net.b[i], grads.b[i], -eta_adapters);
  }
  net.head_w = add(net.head_w, grads.head_w, -eta_head);
  for (std::size_t c = 0; c < net.head_b.size(); ++c) net.head_b[c] -= eta_head * grads.head_b[c];
}

}  // namespace oracle
