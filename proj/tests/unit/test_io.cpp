#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cml/checkpoint.hpp"
#include "cml/cli.hpp"
#include "cml/config.hpp"
#include "cml/csv.hpp"
#include "cml/errors.hpp"

using namespace cml;
namespace fs = std::filesystem;
using doctest::Approx;

namespace {

// A scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("cml_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

Checkpoint make_checkpoint(ModelFamily f, const std::vector<int>& hidden, ActivationKind kind,
                           std::uint64_t seed) {
  Checkpoint c;
  c.family = f;
  c.task = f == ModelFamily::Plasticity ? Task::Plasticity
           : f == ModelFamily::Damage   ? Task::Damage
                                        : Task::Cz3d;
  c.weights = {100, 100, 1, 10, 100, 10};
  c.switches = {true, 300.0, false};
  c.training.seed = seed;
  c.nets = init_state_nets(f, hidden, {kind, 2.0}, seed);
  return c;
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream s;
  write_checkpoint(c, s);
  return s.str();
}

Checkpoint deserialize(const std::string& bytes) {
  std::istringstream s(bytes);
  return read_checkpoint(s);
}

int run_cli(const std::vector<std::string>& args, std::string* out_text = nullptr,
            std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path kConfigs = fs::path(CML_SOURCE_DIR) / "configs";

}  // namespace

TEST_CASE("checkpoint round trip is bitwise for every shipped network shape (property)") {
  struct Case {
    ModelFamily family;
    std::vector<int> hidden;
    ActivationKind kind;
  };
  const std::vector<Case> cases = {
      {ModelFamily::Damage, {100, 100, 100, 100, 100}, ActivationKind::Relu},
      {ModelFamily::Plasticity, {80, 80, 80, 80, 80}, ActivationKind::Relu},
      {ModelFamily::Damage, {40, 40, 40}, ActivationKind::Relu},
      {ModelFamily::Damage, {8, 8}, ActivationKind::Tanh},
      {ModelFamily::Damage, {10, 10}, ActivationKind::Swish},
      {ModelFamily::Cz3d, {100, 100, 100, 100, 100}, ActivationKind::Relu},
  };
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const Case& k : cases) {
    const Checkpoint c = make_checkpoint(k.family, k.hidden, k.kind, 9);
    const Checkpoint back = deserialize(serialize(c));
    CHECK(back.family == c.family);
    CHECK(back.task == c.task);
    CHECK(back.training.seed == 9);
    CHECK(back.weights.ky == 10.0);
    CHECK(back.switches.R == 300.0);
    const int dim = load_dim(k.family) + 2;
    Eigen::MatrixXd x(dim, 100);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = u(rng);
    for (int n = 0; n < 2; ++n) {
      CHECK(back.nets[n].hidden.kind == k.kind);
      CHECK(forward(back.nets[n], x) == forward(c.nets[n], x));
    }
    CHECK(serialize(back) == serialize(c));
  }
}

TEST_CASE("checkpoint file errors") {
  TempDir tmp;
  const Checkpoint c = make_checkpoint(ModelFamily::Damage, {8, 8}, ActivationKind::Relu, 1);
  const fs::path p = tmp.path / "net.cpnn";
  save_checkpoint(c, p);
  CHECK(load_checkpoint(p).nets[0].params.weights[1] == c.nets[0].params.weights[1]);

  const std::string bytes = serialize(c);
  CHECK(bytes.substr(0, 4) == "CPNN");
  for (std::size_t cut : {std::size_t{2}, std::size_t{7}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1}) {
    CHECK_THROWS_AS(deserialize(bytes.substr(0, cut)), Error);
    try {
      deserialize(bytes.substr(0, cut));
    } catch (const IoFailure&) {
    } catch (const ShapeMismatch&) {
    } catch (const BadMagic&) {
      CHECK(cut < 4);
    }
  }
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize(bad), BadMagic);
  std::string future = bytes;
  future[4] = 7;
  CHECK_THROWS_AS(deserialize(future), UnsupportedVersion);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "missing.cpnn"), IoFailure);
}

TEST_CASE("trajectory CSV schema (golden headers)") {
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  CHECK(join(trajectory_header(ModelFamily::Plasticity)) ==
        "time,load,force,eps_p,xi_p,tangent,psi,dissipation");
  CHECK(join(trajectory_header(ModelFamily::Damage)) ==
        "time,load,force,d,xi_d,tangent,psi,dissipation");
  CHECK(join(trajectory_header(ModelFamily::Cz3d)) ==
        "time,load_s1,load_s2,load_n,force_s1,force_s2,force_n,d,xi_d,"
        "tangent_11,tangent_12,tangent_13,tangent_21,tangent_22,tangent_23,"
        "tangent_31,tangent_32,tangent_33,psi,dissipation");
  std::ostringstream loss;
  loss_history_table({}).write(loss);
  CHECK(loss.str() == "epoch,total,ue,ux,ev,yl,ke,ky\n");
}

TEST_CASE("trajectory CSV round trip") {
  Trajectory zero;
  zero.records.resize(1);
  std::ostringstream s;
  write_trajectory_csv(zero, s);
  const std::string text = s.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.substr(text.find('\n') + 1) == "0,0,0,0,0,0,0,0\n");

  for (ModelFamily f : {ModelFamily::Plasticity, ModelFamily::Damage, ModelFamily::Cz3d}) {
    auto b = make_implicit_backend(f, MaterialSet{});
    const LoadingPath p = f == ModelFamily::Cz3d
                              ? make_loading_path("g_s1=0.3*t; g_s2=0.2*t^2; g_n=sin(pi*t)", 30)
                              : make_loading_path("2.0*abs(t*sin(3*pi*t))", 30);
    const Trajectory t = run_path(*b, p);
    std::stringstream io;
    write_trajectory_csv(t, io);
    const Trajectory back = read_trajectory_csv(io);
    CHECK(back.family == f);
    REQUIRE(back.size() == t.size());
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(back.records[k].same_values(t.records[k]));
  }
  std::istringstream junk("time,load\n1,2\n");
  CHECK_THROWS_AS(read_trajectory_csv(junk), IoFailure);
  std::istringstream ragged("time,load,force,d,xi_d,tangent,psi,dissipation\n0,0,0\n");
  CHECK_THROWS_AS(read_trajectory_csv(ragged), IoFailure);
}

TEST_CASE("number formatting is round-trip exact (property)") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("config parsing") {
  const RunConfig d = parse_run_config("task: plasticity\n");
  CHECK(d.task == Task::Plasticity);
  CHECK(d.material.plastic.E == 3.0);
  CHECK(d.network.hidden_widths.size() == 5);

  const RunConfig c = parse_run_config(R"(
task: cz3d
material:
  cohesive_zone: {Kn_MPa_per_mm: 6.0, Ks1_MPa_per_mm: 0.25}
switch: {mode: smooth, R: 50, symmetric_sign: true}
loss_weights: {ue: 3}
collocation: {gap_n_mm: [0.0, 0.5, 1.0]}
paths:
  - "g_s1=t; g_s2=0*t; g_n=t"
  - {family: t_sin, amplitude: 1.5, omega: 2, n_steps: 10, clip: 1.0}
training: {epochs: 7, seed: 3}
)");
  CHECK(c.family() == ModelFamily::Cz3d);
  CHECK(c.material.cz3d.K_n == 6.0);
  CHECK(c.material.cz3d.K_s1 == 0.25);
  CHECK(c.material.cz3d.K_s2 == 2.0);
  CHECK(c.switches.smooth);
  CHECK(c.switches.R == 50.0);
  CHECK(c.switches.symmetric_sign);
  CHECK(c.weights.ue == 3.0);
  CHECK(c.weights.ux == 1.0);
  CHECK(c.collocation.gap_n.step == 0.5);
  REQUIRE(c.paths.size() == 2);
  CHECK(c.paths[0].family == "expr");
  CHECK(c.paths[1].amplitude == 1.5);
  CHECK(c.paths[1].n_steps == 10);
  CHECK(c.train_setup().cfg.epochs == 7);
  CHECK(c.train_setup().task == Task::Cz3d);

  CHECK_THROWS_AS(parse_run_config("task: plasticity\nlearning_rate: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("training: {learnin_rate: 1.0e-3}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("task: elastic\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("training: {epochs: -1}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("material: {damage: {K_MPa_per_mm: 0}}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("collocation: {gap_mm: [0, 0, 1]}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("network: {hidden_widths: []}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("paths: [{family: spiral}]\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("task: [\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("every shipped config validates") {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".cfg") continue;
    ++n;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_run_config(entry.path()));
  }
  CHECK(n >= 9);
}

TEST_CASE("output directory override") {
  TempDir tmp;
  ::setenv("CML_OUTPUT_DIR", tmp.path.c_str(), 1);
  const RunConfig c = parse_run_config("output: {dir: elsewhere}\n");
  ::unsetenv("CML_OUTPUT_DIR");
  CHECK(c.output_dir == tmp.path);
  CHECK(parse_run_config("output: {dir: elsewhere}\n").output_dir == fs::path("elsewhere"));
}

TEST_CASE("command line: usage and validation errors") {
  std::string out, err;
  CHECK(run_cli({"frobnicate"}, &out, &err) == kExitInvalid);
  CHECK(err.find("error:") != std::string::npos);
  CHECK(err.find("gen-collocation") != std::string::npos);
  CHECK(run_cli({}, &out, &err) == kExitInvalid);
  CHECK(run_cli({"--help"}, &out, &err) == kExitOk);
  CHECK(out.find("fe-demo") != std::string::npos);

  TempDir tmp;
  const fs::path bad = tmp.path / "bad.cfg";
  std::ofstream(bad) << "training: {epochs: 0.5.1}\n";
  CHECK(run_cli({"train", "-c", bad.string()}, &out, &err) == kExitInvalid);
  CHECK(run_cli({"eval-path", "--path", "sin(", "--backend", "implicit"}, &out, &err) ==
        kExitInvalid);
  CHECK(run_cli({"eval-path", "--path", "t", "--backend", (tmp.path / "none.cpnn").string()},
                &out, &err) == kExitFailure);

  // The installed executable maps the same codes onto the process status.
  const std::string cmd = std::string("\"") + CML_TOOL + "\" frobnicate > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == kExitInvalid);
}

TEST_CASE("command line: every shipped config runs end to end") {
  TempDir tmp;
  ::setenv("CML_OUTPUT_DIR", tmp.path.c_str(), 1);
  const auto cfg = [](const char* name) { return (kConfigs / name).string(); };
  const auto ok = [](const std::vector<std::string>& args) {
    std::string out, err;
    const int code = run_cli(args, &out, &err);
    CAPTURE(err);
    CHECK(code == kExitOk);
    return out;
  };

  ok({"gen-collocation", "-c", cfg("damage_table1.cfg")});
  CHECK(read_file(tmp.path / "collocation_damage.csv").rfind("g,d_prev,xi_d_prev\n", 0) == 0);

  const fs::path ckpt = tmp.path / "damage.cpnn";
  ok({"train", "-c", cfg("damage_tuned.cfg"), "--epochs", "1", "--checkpoint", ckpt.string()});
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(tmp.path / "damage_loss.csv"));
  ok({"train", "-c", cfg("damage_table1.cfg"), "--epochs", "1"});

  const std::string cmp = ok({"compare", "--ref", "implicit", "--test", ckpt.string(), "--path",
                              "2.0*abs(t*sin(3*pi*t))", "--clip", "1"});
  CHECK(cmp.find("mean") != std::string::npos);
  CHECK(fs::exists(tmp.path / "errors_0.csv"));

  ok({"eval-path", "-c", cfg("damage_tuned.cfg"), "--backend", ckpt.string()});
  ok({"eval-path", "-c", cfg("cz3d.cfg"), "--backend", "implicit"});
  ok({"train", "-c", cfg("cz3d.cfg"), "--epochs", "1"});
  ok({"train", "-c", cfg("plasticity_table5.cfg"), "--epochs", "1"});
  ok({"data-baseline", "-c", cfg("data_baseline.cfg"), "--epochs", "1", "--physics",
      (tmp.path / "plasticity.cpnn").string()});
  ok({"fe-demo", "-c", cfg("truss_demo.cfg"), "--checkpoint",
      (tmp.path / "plasticity.cpnn").string()});
  CHECK(read_file(tmp.path / "fe_implicit.csv").rfind("step,phase,factor,reaction_x,tip_ux,iterations\n", 0) == 0);
  ok({"appendix-b", "-c", cfg("appendix_b.cfg")});
  ok({"bench", "-c", cfg("bench.cfg"), "--checkpoint", ckpt.string()});
  ok({"timestep-study", "-c", cfg("timestep.cfg")});
  CHECK(fs::exists(tmp.path / "timestep.csv"));

  const Trajectory t = import_trajectory_csv(tmp.path / "trajectory_implicit_0.csv");
  CHECK(t.family == ModelFamily::Cz3d);
  ::unsetenv("CML_OUTPUT_DIR");
}
