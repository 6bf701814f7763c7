#include "ptznav/diffnum/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ptznav::diffnum {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'T', 'Z'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));  // little-endian host
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size())
    throw std::runtime_error("checkpoint: truncated record");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string serialize(const TrainableModel& m) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.arch().size()));
  out.append(m.arch());
  for (const auto& p : m.params()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.append(p.name);
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (int d : p.value.shape)
      put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    const std::size_t bytes = p.value.numel() * sizeof(double);
    const std::size_t base = out.size();
    out.resize(base + bytes);
    std::memcpy(out.data() + base, p.value.ptr(), bytes);
  }
  return out;
}

}  // namespace

TrainableModel::Param& TrainableModel::add(const std::string& name,
                                           Tensor init) {
  if (has(name))
    throw std::invalid_argument("TrainableModel: duplicate parameter " + name);
  Param p;
  p.name = name;
  p.grad = Tensor(init.shape);
  p.m = Tensor(init.shape);
  p.v = Tensor(init.shape);
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

bool TrainableModel::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

TrainableModel::Param& TrainableModel::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("TrainableModel: no parameter named " + name);
}

const TrainableModel::Param& TrainableModel::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::invalid_argument("TrainableModel: no parameter named " + name);
}

void TrainableModel::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

Graph::NodeId TrainableModel::bind(Graph& g, const std::string& name) {
  Param& p = at(name);
  return g.param(p.value, &p.grad);
}

void TrainableModel::save(const std::string& path) const {
  const std::string bytes = serialize(*this);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainableModel TrainableModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  std::size_t pos = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  pos = 4;
  const auto version = take<std::uint16_t>(bytes, pos);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  const auto arch_len = take<std::uint32_t>(bytes, pos);
  if (pos + arch_len > bytes.size())
    throw std::runtime_error("checkpoint: truncated arch descriptor");
  TrainableModel m(bytes.substr(pos, arch_len));
  pos += arch_len;

  while (pos < bytes.size()) {
    const auto name_len = take<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size())
      throw std::runtime_error("checkpoint: truncated name");
    std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    const auto dtype = take<std::uint8_t>(bytes, pos);
    if (dtype != kDtypeF64)
      throw std::runtime_error("checkpoint: unsupported dtype tag");
    const auto rank = take<std::uint8_t>(bytes, pos);
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      const auto v = take<std::uint64_t>(bytes, pos);
      if (v == 0 || v > (1u << 30))
        throw std::runtime_error("checkpoint: implausible dim");
      d = static_cast<int>(v);
    }
    Tensor t(shape);
    const std::size_t nbytes = t.numel() * sizeof(double);
    if (pos + nbytes > bytes.size())
      throw std::runtime_error("checkpoint: truncated data for " + name);
    std::memcpy(t.ptr(), bytes.data() + pos, nbytes);
    pos += nbytes;
    m.add(name, std::move(t));
  }
  return m;
}

std::uint64_t TrainableModel::content_hash() const {
  const std::string bytes = serialize(*this);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out,
                      Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

void optimizer_step(TrainableModel& model, const OptimConfig& cfg) {
  for (auto& p : model.params())
    for (double g : p.grad.data)
      if (!std::isfinite(g))
        throw std::runtime_error("optimizer_step: non-finite gradient in " +
                                 p.name);

  if (cfg.algo == OptimConfig::Algo::sgd) {
    for (auto& p : model.params())
      for (std::size_t i = 0; i < p.value.numel(); ++i)
        p.value.data[i] -= cfg.lr * p.grad.data[i];
    model.bump_step();
    return;
  }

  model.bump_step();
  const int t = model.step_count();
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : model.params()) {
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad.data[i];
      p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
      p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p.m.data[i] / bc1;
      const double vhat = p.v.data[i] / bc2;
      p.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double grad_check(TrainableModel& model,
                  const std::function<Graph::NodeId(Graph&)>& loss_fn,
                  double eps, std::size_t max_per_param, std::uint64_t seed) {
  model.zero_grad();
  {
    Graph g;
    const Graph::NodeId loss = loss_fn(g);
    g.backward(loss);
  }

  auto eval = [&]() {
    Graph g;
    return g.scalar(loss_fn(g));
  };

  Rng rng(seed);
  double max_rel = 0.0;
  for (auto& p : model.params()) {
    const std::size_t n = p.value.numel();
    std::vector<std::size_t> idx;
    if (n <= max_per_param) {
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      idx.reserve(max_per_param);
      for (std::size_t i = 0; i < max_per_param; ++i)
        idx.push_back(rng.below(n));
    }
    for (std::size_t i : idx) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + eps;
      const double up = eval();
      p.value.data[i] = saved - eps;
      const double down = eval();
      p.value.data[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = p.grad.data[i];
      const double rel =
          std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace ptznav::diffnum
