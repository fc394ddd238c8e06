#include "cml/pathlab.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cml/errors.hpp"

namespace cml {

// ---------------------------------------------------------------- expressions

struct Expression::Node {
  enum class Kind { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Call1, Call2 } kind;
  double value = 0.0;
  double (*fn1)(double) = nullptr;
  double (*fn2)(double, double) = nullptr;
  std::shared_ptr<const Node> a, b;

  double eval(double t) const {
    switch (kind) {
      case Kind::Const: return value;
      case Kind::Var: return t;
      case Kind::Neg: return -a->eval(t);
      case Kind::Add: return a->eval(t) + b->eval(t);
      case Kind::Sub: return a->eval(t) - b->eval(t);
      case Kind::Mul: return a->eval(t) * b->eval(t);
      case Kind::Div: return a->eval(t) / b->eval(t);
      case Kind::Pow: return std::pow(a->eval(t), b->eval(t));
      case Kind::Call1: return fn1(a->eval(t));
      case Kind::Call2: return fn2(a->eval(t), b->eval(t));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Expression::Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr make_call(double (*fn)(double), NodePtr a) {
  auto n = std::make_shared<Expression::Node>();
  n->kind = Kind::Call1;
  n->fn1 = fn;
  n->a = std::move(a);
  return n;
}

NodePtr make_call(double (*fn)(double, double), NodePtr a, NodePtr b) {
  auto n = std::make_shared<Expression::Node>();
  n->kind = Kind::Call2;
  n->fn2 = fn;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

double f_abs(double x) { return std::abs(x); }
double f_sin(double x) { return std::sin(x); }
double f_cos(double x) { return std::cos(x); }
double f_tan(double x) { return std::tan(x); }
double f_exp(double x) { return std::exp(x); }
double f_log(double x) { return std::log(x); }
double f_sqrt(double x) { return std::sqrt(x); }
double f_min(double x, double y) { return std::min(x, y); }
double f_max(double x, double y) { return std::max(x, y); }

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw UnknownFamily("cannot parse path expression '" + s_ + "' at column " +
                        std::to_string(pos_ + 1) + ": " + why);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    NodePtr n = term();
    for (;;) {
      if (accept('+')) n = make(Kind::Add, n, term());
      else if (accept('-')) n = make(Kind::Sub, n, term());
      else return n;
    }
  }
  NodePtr term() {
    NodePtr n = unary();
    for (;;) {
      if (accept('*')) n = make(Kind::Mul, n, unary());
      else if (accept('/')) n = make(Kind::Div, n, unary());
      else return n;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Kind::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Kind::Pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      expect(')');
      return n;
    }
    if (c == '|') {
      ++pos_;
      NodePtr n = expr();
      expect('|');
      return make_call(f_abs, n);
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<Expression::Node>();
      n->kind = Kind::Const;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "t") return make(Kind::Var);
      if (id == "pi") {
        auto n = std::make_shared<Expression::Node>();
        n->kind = Kind::Const;
        n->value = M_PI;
        return n;
      }
      return call(id);
    }
    fail(std::string("unexpected '") + c + "'");
  }
  NodePtr call(const std::string& id) {
    static const std::pair<const char*, double (*)(double)> unary_fns[] = {
        {"abs", f_abs}, {"sin", f_sin}, {"cos", f_cos}, {"tan", f_tan},
        {"exp", f_exp}, {"log", f_log}, {"sqrt", f_sqrt}};
    static const std::pair<const char*, double (*)(double, double)> binary_fns[] = {
        {"min", f_min}, {"max", f_max}};
    for (const auto& [name, fn] : unary_fns) {
      if (id == name) {
        expect('(');
        NodePtr n = make_call(fn, expr());
        expect(')');
        return n;
      }
    }
    for (const auto& [name, fn] : binary_fns) {
      if (id == name) {
        expect('(');
        NodePtr a = expr();
        expect(',');
        NodePtr b = expr();
        expect(')');
        return make_call(fn, a, b);
      }
    }
    fail("unknown name '" + id + "'");
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  Expression e;
  e.text_ = trim(text);
  if (e.text_.empty()) throw UnknownFamily("empty path expression");
  e.root_ = Parser(e.text_).parse();
  return e;
}

double Expression::operator()(double t) const { return root_->eval(t); }

// ---------------------------------------------------------------- paths

LoadingPath::LoadingPath(std::vector<Expression> components, int n_steps, double duration)
    : exprs_(std::move(components)),
      dim_(static_cast<int>(exprs_.size())),
      n_steps_(n_steps),
      duration_(duration) {
  if (dim_ != 1 && dim_ != 3) throw InvalidArgument("a path has 1 or 3 components");
  if (n_steps < 1) throw InvalidArgument("n_steps must be >= 1");
  if (!(duration > 0.0)) throw InvalidArgument("duration must be > 0");
  for (int k = 0; k <= n_steps_; ++k) {
    const double t = time(k);
    Vec3 v = Vec3::Zero();
    for (int c = 0; c < dim_; ++c) v[c] = exprs_[static_cast<std::size_t>(c)](t);
    if (!v.allFinite()) {
      throw InvalidArgument("path is not finite at t = " + num(t));
    }
    samples_.push_back(v);
  }
}

LoadingPath::LoadingPath(std::vector<std::array<double, 3>> samples, int dim, double duration)
    : dim_(dim), n_steps_(static_cast<int>(samples.size()) - 1), duration_(duration) {
  if (dim_ != 1 && dim_ != 3) throw InvalidArgument("a path has 1 or 3 components");
  if (samples.size() < 2) throw InvalidArgument("a sampled path needs at least 2 samples");
  if (!(duration > 0.0)) throw InvalidArgument("duration must be > 0");
  for (const auto& s : samples) {
    Vec3 v(s[0], dim_ == 3 ? s[1] : 0.0, dim_ == 3 ? s[2] : 0.0);
    if (!v.allFinite()) throw InvalidArgument("path samples must be finite");
    samples_.push_back(v);
  }
}

Vec3 LoadingPath::load(int k) const { return samples_.at(static_cast<std::size_t>(k)); }

std::string LoadingPath::describe() const {
  if (exprs_.empty()) return "sampled";
  if (dim_ == 1) return exprs_[0].text();
  return "g_s1=" + exprs_[0].text() + "; g_s2=" + exprs_[1].text() + "; g_n=" + exprs_[2].text();
}

LoadingPath LoadingPath::with_steps(int n_steps) const {
  if (exprs_.empty()) throw InvalidArgument("a sampled path cannot be re-resolved");
  return LoadingPath(exprs_, n_steps, duration_);
}

namespace {

std::vector<Expression> parse_components(const std::string& formula) {
  std::vector<std::string> parts;
  std::stringstream ss(formula);
  std::string part;
  while (std::getline(ss, part, ';')) {
    if (!trim(part).empty()) parts.push_back(trim(part));
  }
  if (parts.size() == 1 && parts[0].find('=') == std::string::npos) {
    return {Expression::parse(parts[0])};
  }
  if (parts.size() != 3) {
    throw UnknownFamily("a vector path needs three components, got '" + formula + "'");
  }
  static const char* names[] = {"g_s1", "g_s2", "g_n"};
  std::vector<std::string> ordered(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) {
      ordered[i] = parts[i];
      continue;
    }
    const std::string name = trim(parts[i].substr(0, eq));
    const auto it = std::find(std::begin(names), std::end(names), name);
    if (it == std::end(names)) {
      throw UnknownFamily("unknown path component '" + name + "' (expected g_s1, g_s2, g_n)");
    }
    ordered[static_cast<std::size_t>(it - std::begin(names))] = parts[i].substr(eq + 1);
  }
  std::vector<Expression> out;
  for (const auto& o : ordered) {
    if (trim(o).empty()) throw UnknownFamily("missing path component in '" + formula + "'");
    out.push_back(Expression::parse(o));
  }
  return out;
}

std::string clipped(const std::string& e, double clip) {
  return clip > 0.0 ? "min(" + e + ", " + num(clip) + ")" : e;
}

}  // namespace

LoadingPath make_loading_path(const PathSpec& spec) {
  const std::string A = num(spec.amplitude);
  const std::string w = num(spec.omega);
  std::string f;
  if (spec.family == "linear") f = "t";
  else if (spec.family == "cubic") f = "t^3";
  else if (spec.family == "quadratic") f = A + "*t^2";
  else if (spec.family == "t_sin") f = A + "*abs(t*sin(" + w + "*pi*t))";
  else if (spec.family == "sin") f = A + "*abs(sin(" + w + "*pi*t))";
  else if (spec.family == "cos") f = A + "*abs(cos(" + w + "*pi*t))";
  else if (spec.family == "zero") f = "0";
  else if (spec.family != "expr") {
    throw UnknownFamily("unknown path family '" + spec.family +
                        "' (expected linear, cubic, quadratic, t_sin, sin, cos, zero, expr)");
  }
  std::vector<Expression> comps;
  if (spec.family == "expr") {
    comps = parse_components(spec.formula);
  } else {
    comps.push_back(Expression::parse(f));
    if (spec.dim == 3) {
      // Named families on a vector path load the normal direction only.
      comps = {Expression::parse("0"), Expression::parse("0"), comps[0]};
    }
  }
  if (spec.clip > 0.0) {
    for (auto& c : comps) c = Expression::parse(clipped(c.text(), spec.clip));
  }
  return LoadingPath(std::move(comps), spec.n_steps, spec.duration);
}

LoadingPath make_loading_path(const std::string& formula, int n_steps, double clip) {
  PathSpec s;
  s.family = "expr";
  s.formula = formula;
  s.n_steps = n_steps;
  s.clip = clip;
  return make_loading_path(s);
}

// ---------------------------------------------------------------- backends

namespace {

PointResult plastic_point(double eps, const PlasticState& prev, const PlasticState& next,
                          const PlasticityParams& p) {
  const Response r = plastic_response(eps, next, p);
  PointResult out;
  out.force[0] = r.force;
  out.state = {next.eps_p, next.xi_p};
  out.psi = r.psi;
  out.dissipation = plastic_dissipation(r, prev, next);
  out.tangent(0, 0) = p.E;
  return out;
}

PointResult damage_point(double g, const DamageState& prev, const DamageState& next,
                         const DamageParams& p) {
  const Response r = damage_response(g, next, p);
  PointResult out;
  out.force[0] = r.force;
  out.state = {next.d, next.xi_d};
  out.psi = r.psi;
  out.dissipation = damage_dissipation(r, prev, next);
  out.tangent(0, 0) = damage_tangent(next, g, p, false);
  return out;
}

PointResult cz3d_point(const Vec3& g, const DamageState& prev, const DamageState& next,
                       const Cz3dParams& p) {
  const Response3d r = cz3d_response(g, next, p);
  PointResult out;
  out.force = r.traction;
  out.state = {next.d, next.xi_d};
  out.psi = r.psi;
  out.dissipation = cz3d_dissipation(r, prev, next);
  out.tangent = cz3d_tangent(next, g, p, false);
  return out;
}

class FrozenResponse : public MaterialBackend {
 public:
  FrozenResponse(ModelFamily f, const MaterialSet& m) : family_(f), m_(m) {}
  ModelFamily family() const override { return family_; }

  PointResult respond(const Vec3& load, const PointState& s) const override {
    switch (family_) {
      case ModelFamily::Plasticity: {
        const PlasticState st{s.alpha, s.xi};
        return plastic_point(load[0], st, st, m_.plastic);
      }
      case ModelFamily::Damage: {
        const DamageState st{s.alpha, s.xi};
        return damage_point(load[0], st, st, m_.damage);
      }
      case ModelFamily::Cz3d: {
        const DamageState st{s.alpha, s.xi};
        return cz3d_point(load, st, st, m_.cz3d);
      }
    }
    throw UnknownKind("unknown model family");
  }

 protected:
  ModelFamily family_;
  MaterialSet m_;
};

class ImplicitBackend final : public FrozenResponse {
 public:
  ImplicitBackend(ModelFamily f, const MaterialSet& m, const SolverConfig& cfg)
      : FrozenResponse(f, m), cfg_(cfg) {}
  std::string name() const override { return "implicit"; }

  PointResult step(const Vec3& load, const PointState& s, bool) override {
    switch (family_) {
      case ModelFamily::Plasticity: {
        const PlasticState prev{s.alpha, s.xi};
        const PlasticStep r = solve_plastic_step(load[0], prev, m_.plastic, cfg_);
        PointResult out = plastic_point(load[0], prev, r.state_next, m_.plastic);
        out.tangent(0, 0) = r.tangent;
        return out;
      }
      case ModelFamily::Damage: {
        const DamageState prev{s.alpha, s.xi};
        const DamageStep r = solve_damage_step(load[0], prev, m_.damage, cfg_);
        PointResult out = damage_point(load[0], prev, r.state_next, m_.damage);
        out.tangent(0, 0) = r.tangent;
        return out;
      }
      case ModelFamily::Cz3d: {
        const DamageState prev{s.alpha, s.xi};
        const Cz3dStep r = solve_cz3d_step(load, prev, m_.cz3d, cfg_);
        PointResult out = cz3d_point(load, prev, r.state_next, m_.cz3d);
        out.tangent = r.tangent;
        return out;
      }
    }
    throw UnknownKind("unknown model family");
  }

 private:
  SolverConfig cfg_;
};

class ExplicitBackend final : public FrozenResponse {
 public:
  using FrozenResponse::FrozenResponse;
  std::string name() const override { return "explicit"; }

  PointResult step(const Vec3& load, const PointState& s, bool) override {
    const DamageState prev{s.alpha, s.xi};
    if (family_ == ModelFamily::Damage) {
      const DamageStep r = explicit_damage_step(load[0], prev, m_.damage);
      PointResult out = damage_point(load[0], prev, r.state_next, m_.damage);
      out.tangent(0, 0) = r.tangent;
      return out;
    }
    const Cz3dStep r = explicit_damage_step(load, prev, m_.cz3d);
    PointResult out = cz3d_point(load, prev, r.state_next, m_.cz3d);
    out.tangent = r.tangent;
    return out;
  }
};

class NetworkBackend final : public FrozenResponse {
 public:
  NetworkBackend(ModelFamily f, const MaterialSet& m, StateNets nets, std::string label)
      : FrozenResponse(f, m),
        nets_(std::make_unique<StateNets>(std::move(nets))),
        eval_state_((*nets_)[0]),
        eval_xi_((*nets_)[1]),
        label_(std::move(label)),
        dim_(load_dim(f)) {
    const int expected = dim_ + 2;
    for (const Network& n : *nets_) {
      if (n.input_dim() != expected || n.output_dim() != 1) {
        throw ShapeMismatch("network backend for " + to_string(f) + " needs " +
                            std::to_string(expected) + " inputs and 1 output");
      }
    }
  }
  std::string name() const override { return label_; }

  PointResult step(const Vec3& load, const PointState& s, bool want_tangent) override {
    for (int c = 0; c < dim_; ++c) x_[static_cast<std::size_t>(c)] = load[c];
    x_[static_cast<std::size_t>(dim_)] = s.alpha;
    x_[static_cast<std::size_t>(dim_) + 1] = s.xi;
    const std::span<const double> in(x_.data(), static_cast<std::size_t>(dim_) + 2);
    double a = 0.0;
    if (want_tangent) {
      a = eval_state_.value_and_gradient(in, dim_, std::span<double>(grad_.data(), 3));
    } else {
      a = eval_state_.value(in);
    }
    const double b = eval_xi_.value(in);
    if (!std::isfinite(a) || !std::isfinite(b)) {
      throw NumericFailure("network produced a non-finite state");
    }

    switch (family_) {
      case ModelFamily::Plasticity: {
        const PlasticityParams& p = m_.plastic;
        PointResult out = plastic_point(load[0], {s.alpha, s.xi}, {a, b}, p);
        // sigma = E (eps - eps_p(eps, ...))
        out.tangent(0, 0) = want_tangent ? p.E - p.E * grad_[0] : 0.0;
        return out;
      }
      case ModelFamily::Damage: {
        const DamageParams& p = m_.damage;
        const double g = load[0];
        PointResult out = damage_point(g, {s.alpha, s.xi}, {a, b}, p);
        const double intact = 1.0 - a;
        // T = (1-d)^2 K g with d = d(g, ...)
        out.tangent(0, 0) =
            want_tangent ? intact * intact * p.K - 2.0 * intact * p.K * g * grad_[0] : 0.0;
        return out;
      }
      case ModelFamily::Cz3d: {
        const Cz3dParams& p = m_.cz3d;
        PointResult out = cz3d_point(load, {s.alpha, s.xi}, {a, b}, p);
        if (want_tangent) {
          const double intact = 1.0 - a;
          const Vec3 k = p.stiffness();
          const Vec3 kg = k.cwiseProduct(load);
          const Vec3 dd(grad_[0], grad_[1], grad_[2]);
          out.tangent = (intact * intact * k).asDiagonal();
          out.tangent -= 2.0 * intact * kg * dd.transpose();
        } else {
          out.tangent.setZero();
        }
        return out;
      }
    }
    throw UnknownKind("unknown model family");
  }

 private:
  // Heap-held so the evaluators' references survive moves of the backend.
  std::unique_ptr<StateNets> nets_;
  PointEvaluator eval_state_;
  PointEvaluator eval_xi_;
  std::string label_;
  int dim_;
  std::array<double, 5> x_{};
  std::array<double, 3> grad_{};
};

}  // namespace

std::unique_ptr<MaterialBackend> make_implicit_backend(ModelFamily family,
                                                       const MaterialSet& m,
                                                       const SolverConfig& cfg) {
  cfg.validate();
  return std::make_unique<ImplicitBackend>(family, m, cfg);
}

std::unique_ptr<MaterialBackend> make_explicit_backend(ModelFamily family,
                                                       const MaterialSet& m) {
  if (family == ModelFamily::Plasticity) {
    throw InvalidArgument("the explicit scheme exists for the damage models only");
  }
  return std::make_unique<ExplicitBackend>(family, m);
}

std::unique_ptr<MaterialBackend> make_network_backend(ModelFamily family,
                                                      const MaterialSet& m,
                                                      StateNets nets, std::string label) {
  return std::make_unique<NetworkBackend>(family, m, std::move(nets), std::move(label));
}

// ---------------------------------------------------------------- trajectories

bool TrajectoryRecord::same_values(const TrajectoryRecord& o) const {
  return time == o.time && load == o.load && force == o.force && state == o.state &&
         tangent == o.tangent && psi == o.psi && dissipation == o.dissipation;
}

Trajectory run_path(MaterialBackend& backend, const LoadingPath& path,
                    const PointState& initial, bool want_tangent) {
  if (path.dim() != load_dim(backend.family())) {
    throw InvalidArgument("a " + std::to_string(path.dim()) + "-component path cannot drive the " +
                          to_string(backend.family()) + " model");
  }
  Trajectory traj;
  traj.family = backend.family();
  traj.backend = backend.name();
  traj.records.reserve(static_cast<std::size_t>(path.n_steps()) + 1);

  const auto record = [&](int k, const PointResult& r, double secs) {
    TrajectoryRecord rec;
    rec.time = path.time(k);
    rec.load = path.load(k);
    rec.force = r.force;
    rec.state = r.state;
    rec.tangent = r.tangent;
    rec.psi = r.psi;
    rec.dissipation = r.dissipation;
    rec.wall_seconds = secs;
    traj.records.push_back(rec);
  };

  // A path that starts away from zero load may start outside the elastic
  // domain, so its first record is a regular step from `initial`.
  const bool start_loaded = !path.load(0).isZero(0.0);
  PointState state = initial;
  if (!start_loaded) {
    PointResult r0 = backend.respond(path.load(0), initial);
    r0.dissipation = 0.0;
    record(0, r0, 0.0);
  }
  for (int k = start_loaded ? 0 : 1; k <= path.n_steps(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    PointResult r;
    try {
      r = backend.step(path.load(k), state, want_tangent);
    } catch (const Error& e) {
      throw PathStepError("step " + std::to_string(k) + " (t = " + num(path.time(k)) +
                              ") of " + backend.name() + ": " + e.what(),
                          static_cast<std::size_t>(k));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record(k, r, secs);
    state = r.state;
  }
  return traj;
}

namespace {

template <typename Value>
ErrorStats error_stats(const Trajectory& test, const Trajectory& ref, Value value) {
  if (test.size() != ref.size()) {
    throw LengthMismatch("trajectories have " + std::to_string(test.size()) + " and " +
                         std::to_string(ref.size()) + " records");
  }
  ErrorStats st;
  double sum = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const auto [diff, base] = value(test.records[k], ref.records[k]);
    if (base < 1e-6) {
      ++st.n_excluded;
      continue;
    }
    const double e = diff / base * 100.0;
    st.errors_pct.push_back(e);
    st.indices.push_back(k);
    sum += e;
    st.max_pct = std::max(st.max_pct, e);
  }
  if (!st.errors_pct.empty()) st.mean_pct = sum / static_cast<double>(st.errors_pct.size());
  return st;
}

}  // namespace

ErrorStats compare(const Trajectory& test, const Trajectory& ref) {
  const int dim = ref.dim();
  return error_stats(test, ref, [dim](const TrajectoryRecord& a, const TrajectoryRecord& b) {
    if (dim == 1) return std::pair{std::abs(a.force[0] - b.force[0]), std::abs(b.force[0])};
    return std::pair{(a.force - b.force).norm(), b.force.norm()};
  });
}

ErrorStats compare_component(const Trajectory& test, const Trajectory& ref, int c) {
  if (c < 0 || c >= ref.dim()) throw InvalidArgument("force component out of range");
  return error_stats(test, ref, [c](const TrajectoryRecord& a, const TrajectoryRecord& b) {
    return std::pair{std::abs(a.force[c] - b.force[c]), std::abs(b.force[c])};
  });
}

Trajectory subsample(const Trajectory& fine, const Trajectory& coarse) {
  if (fine.size() < 2 || coarse.size() < 2) throw LengthMismatch("trajectories too short");
  const std::size_t nf = fine.size() - 1;
  const std::size_t nc = coarse.size() - 1;
  if (nf % nc != 0) {
    throw LengthMismatch("step counts " + std::to_string(nf) + " and " + std::to_string(nc) +
                         " are not integer multiples");
  }
  const std::size_t ratio = nf / nc;
  Trajectory out;
  out.family = fine.family;
  out.backend = fine.backend;
  for (std::size_t k = 0; k <= nc; ++k) out.records.push_back(fine.records[k * ratio]);
  return out;
}

double yield_value(ModelFamily family, const MaterialSet& m, const Vec3& load,
                   const PointState& state) {
  switch (family) {
    case ModelFamily::Plasticity: {
      const auto& p = m.plastic;
      const double sigma = p.E * (load[0] - state.alpha);
      return plastic_yield(sigma, voce_force(state.xi, p.h1, p.h2), p);
    }
    case ModelFamily::Damage: {
      const auto& p = m.damage;
      const double Y = (1.0 - state.alpha) * p.K * load[0] * load[0];
      return damage_yield(Y, voce_force(state.xi, p.h1, p.h2), p);
    }
    case ModelFamily::Cz3d: {
      const auto& p = m.cz3d;
      const double Y = (1.0 - state.alpha) * cz3d_quadratic(load, p);
      return damage_yield(Y, voce_force(state.xi, p.h1, p.h2), p.normal());
    }
  }
  return 0.0;
}

InvariantReport check_invariants(const Trajectory& traj, const MaterialSet& m) {
  InvariantReport rep;
  for (std::size_t k = 0; k < traj.records.size(); ++k) {
    const auto& r = traj.records[k];
    rep.max_yield = std::max(rep.max_yield, yield_value(traj.family, m, r.load, r.state));
    if (k == 0) continue;
    const auto& prev = traj.records[k - 1].state;
    rep.max_state_decrease = std::max(rep.max_state_decrease, prev.alpha - r.state.alpha);
    rep.max_hardening_decrease = std::max(rep.max_hardening_decrease, prev.xi - r.state.xi);
  }
  return rep;
}

double frozen_state_drift(const Trajectory& test, const Trajectory& ref) {
  if (test.size() != ref.size()) {
    throw LengthMismatch("trajectories have " + std::to_string(test.size()) + " and " +
                         std::to_string(ref.size()) + " records");
  }
  double drift = 0.0;
  bool yielded = false;
  for (std::size_t k = 1; k < ref.size(); ++k) {
    const auto& before = ref.records[k - 1].state;
    const auto& after = ref.records[k].state;
    yielded = yielded || !(before == PointState{});
    if (!yielded || !(before == after)) continue;
    drift = std::max(drift, std::abs(test.records[k].state.alpha - test.records[k - 1].state.alpha));
  }
  return drift;
}

std::vector<BenchmarkEntry> benchmark(const std::vector<MaterialBackend*>& backends,
                                      const LoadingPath& path, int reps) {
  if (reps < 3) throw InvalidArgument("benchmark needs reps >= 3");
  std::vector<BenchmarkEntry> out;
  std::vector<Vec3> loads;
  for (int k = 0; k <= path.n_steps(); ++k) loads.push_back(path.load(k));
  volatile double sink = 0.0;  // keeps the stepping loops observable
  for (MaterialBackend* b : backends) {
    if (path.dim() != load_dim(b->family())) {
      throw InvalidArgument("benchmark path does not fit backend " + b->name());
    }
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) {
      PointState s;
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t k = 1; k < loads.size(); ++k) {
        const PointResult res = b->step(loads[k], s, false);
        s = res.state;
        sink = sink + res.force[0];
      }
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + reps / 2, times.end());
    out.push_back({b->name(), times[static_cast<std::size_t>(reps / 2)], 0.0});
  }
  double fastest = 0.0;
  for (const auto& e : out) {
    if (fastest == 0.0 || e.median_seconds < fastest) fastest = e.median_seconds;
  }
  for (auto& e : out) e.normalized = fastest > 0.0 ? e.median_seconds / fastest : 1.0;
  return out;
}

std::vector<TimestepRow> timestep_study(MaterialBackend& backend, MaterialBackend& reference,
                                        const LoadingPath& path,
                                        const std::vector<double>& dt_list, int ref_steps) {
  if (dt_list.empty()) throw InvalidArgument("timestep study needs at least one dt");
  const Trajectory ref = run_path(reference, path.with_steps(ref_steps));
  std::vector<TimestepRow> rows;
  for (double dt : dt_list) {
    if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
    const int n = static_cast<int>(std::lround(path.duration() / dt));
    if (n < 1) throw InvalidArgument("dt exceeds the path duration");
    const Trajectory test = run_path(backend, path.with_steps(n));
    TimestepRow row;
    row.n_steps = n;
    row.dt = path.duration() / n;
    row.stats = n >= ref_steps ? compare(subsample(test, ref), ref)
                               : compare(test, subsample(ref, test));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cml
