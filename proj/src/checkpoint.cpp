#include "cml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'N', 'N'};
// Guards against allocating absurd buffers from a corrupt header.
constexpr std::uint32_t kMaxLayers = 64;
constexpr std::uint32_t kMaxWidth = 1u << 16;
constexpr std::uint32_t kMaxName = 256;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { put(&v, 1); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { put(p, n); }

 private:
  void put(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoFailure("checkpoint write failed");
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint8_t u8() {
    unsigned char b = 0;
    get(&b, 1);
    return b;
  }
  std::uint32_t u32() {
    unsigned char b[4];
    get(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    get(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void get(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw IoFailure("checkpoint is truncated");
    }
  }

 private:
  std::istream& in_;
};

void write_net(Writer& w, const std::string& name, const Network& net) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(net.hidden.kind));
  w.f64(net.hidden.R);
  w.u32(static_cast<std::uint32_t>(net.layer_sizes.size()));
  for (int s : net.layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Eigen::MatrixXd& W = net.params.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.f64(W(r, c));
    }
    for (Eigen::Index r = 0; r < net.params.biases[l].size(); ++r) w.f64(net.params.biases[l][r]);
  }
}

Network read_net(Reader& r, const std::string& expected_name, int input_dim) {
  const std::uint32_t name_len = r.u32();
  if (name_len > kMaxName) throw ShapeMismatch("checkpoint network name is too long");
  std::string name(name_len, '\0');
  r.get(name.data(), name_len);
  if (name != expected_name) {
    throw ShapeMismatch("checkpoint network '" + name + "' where '" + expected_name +
                        "' was expected");
  }
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(ActivationKind::Softplus)) {
    throw ShapeMismatch("checkpoint activation tag " + std::to_string(kind) + " is unknown");
  }
  Network net;
  net.hidden = {static_cast<ActivationKind>(kind), r.f64()};
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 2 || n_sizes > kMaxLayers) {
    throw ShapeMismatch("checkpoint network has " + std::to_string(n_sizes) + " layer sizes");
  }
  for (std::uint32_t k = 0; k < n_sizes; ++k) {
    const std::uint32_t s = r.u32();
    if (s == 0 || s > kMaxWidth) throw ShapeMismatch("checkpoint layer width out of range");
    net.layer_sizes.push_back(static_cast<int>(s));
  }
  if (net.layer_sizes.front() != input_dim || net.layer_sizes.back() != 1) {
    throw ShapeMismatch("checkpoint network '" + name + "' is " +
                        std::to_string(net.layer_sizes.front()) + " -> " +
                        std::to_string(net.layer_sizes.back()) + ", expected " +
                        std::to_string(input_dim) + " -> 1");
  }
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    Eigen::MatrixXd W(net.layer_sizes[l + 1], net.layer_sizes[l]);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = r.f64();
    }
    Eigen::VectorXd b(net.layer_sizes[l + 1]);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = r.f64();
    net.params.weights.push_back(std::move(W));
    net.params.biases.push_back(std::move(b));
  }
  return net;
}

}  // namespace

void write_checkpoint(const Checkpoint& c, std::ostream& out) {
  Writer w(out);
  w.bytes(kMagic, 4);
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(c.family));
  w.u32(static_cast<std::uint32_t>(c.task));
  const auto& m = c.material;
  for (double v : {m.plastic.E, m.plastic.sigma_y0, m.plastic.h1, m.plastic.h2}) w.f64(v);
  for (double v : {m.damage.K, m.damage.Y0, m.damage.h1, m.damage.h2}) w.f64(v);
  for (double v : {m.cz3d.K_n, m.cz3d.K_s1, m.cz3d.K_s2, m.cz3d.Y0, m.cz3d.h1, m.cz3d.h2}) {
    w.f64(v);
  }
  for (double v : {c.weights.ue, c.weights.ux, c.weights.ev, c.weights.yl, c.weights.ke,
                   c.weights.ky}) {
    w.f64(v);
  }
  w.u8(c.switches.smooth ? 1 : 0);
  w.u8(c.switches.symmetric_sign ? 1 : 0);
  w.f64(c.switches.R);
  const auto& t = c.training;
  w.f64(t.learning_rate);
  w.u32(static_cast<std::uint32_t>(t.epochs));
  w.u32(static_cast<std::uint32_t>(t.batch_size));
  w.u64(t.seed);
  for (double v : {t.beta1, t.beta2, t.eps_adam, t.smoothing_R}) w.f64(v);
  const auto names = output_names(c.family);
  w.u32(2);
  for (int k = 0; k < 2; ++k) write_net(w, names[static_cast<std::size_t>(k)], c.nets[static_cast<std::size_t>(k)]);
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  // Serialize fully before touching the file so a failure never leaves a
  // half-written checkpoint behind.
  std::ostringstream buf(std::ios::binary);
  write_checkpoint(c, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
  const std::string bytes = buf.str();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoFailure("write to '" + path.string() + "' failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  Reader r(in);
  char magic[4] = {};
  r.get(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagic("not a CPNN checkpoint");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw UnsupportedVersion("checkpoint version " + std::to_string(version) +
                             " is not supported (expected " +
                             std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint c;
  const std::uint32_t family = r.u32();
  const std::uint32_t task = r.u32();
  if (family > static_cast<std::uint32_t>(ModelFamily::Cz3d) ||
      task > static_cast<std::uint32_t>(Task::DataDriven)) {
    throw ShapeMismatch("checkpoint family or task tag is unknown");
  }
  c.family = static_cast<ModelFamily>(family);
  c.task = static_cast<Task>(task);
  auto& m = c.material;
  for (double* v : {&m.plastic.E, &m.plastic.sigma_y0, &m.plastic.h1, &m.plastic.h2}) *v = r.f64();
  for (double* v : {&m.damage.K, &m.damage.Y0, &m.damage.h1, &m.damage.h2}) *v = r.f64();
  for (double* v : {&m.cz3d.K_n, &m.cz3d.K_s1, &m.cz3d.K_s2, &m.cz3d.Y0, &m.cz3d.h1, &m.cz3d.h2}) {
    *v = r.f64();
  }
  for (double* v : {&c.weights.ue, &c.weights.ux, &c.weights.ev, &c.weights.yl, &c.weights.ke,
                    &c.weights.ky}) {
    *v = r.f64();
  }
  c.switches.smooth = r.u8() != 0;
  c.switches.symmetric_sign = r.u8() != 0;
  c.switches.R = r.f64();
  auto& t = c.training;
  t.learning_rate = r.f64();
  t.epochs = static_cast<int>(r.u32());
  t.batch_size = static_cast<int>(r.u32());
  t.seed = r.u64();
  for (double* v : {&t.beta1, &t.beta2, &t.eps_adam, &t.smoothing_R}) *v = r.f64();
  const std::uint32_t n_nets = r.u32();
  if (n_nets != 2) throw ShapeMismatch("checkpoint holds " + std::to_string(n_nets) + " networks, expected 2");
  const auto names = output_names(c.family);
  const int input_dim = load_dim(c.family) + 2;
  StateNets nets{read_net(r, names[0], input_dim), read_net(r, names[1], input_dim)};
  c.nets = std::move(nets);
  return c;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace cml
