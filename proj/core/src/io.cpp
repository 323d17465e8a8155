#include "dinomc/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace dinomc {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "artifact format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'I', 'N', 'O', 'M', 'C', 'B', '1'};

std::string bin_path(const std::string& stem) { return stem + ".bin"; }
std::string json_path(const std::string& stem) { return stem + ".json"; }

void write_manifest(const std::string& stem, json body, const Provenance& prov) {
  body["provenance"] = {{"config_hash", prov.config_hash},
                        {"master_seed", prov.master_seed},
                        {"stage", prov.stage},
                        {"code_version", code_version()}};
  std::ofstream os(json_path(stem));
  if (!os) throw FormatError("cannot write " + json_path(stem));
  os << body.dump(2) << '\n';
}

json read_manifest(const std::string& stem) {
  std::ifstream is(json_path(stem));
  if (!is) throw FormatError("cannot read " + json_path(stem));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + json_path(stem) + ": " + e.what());
  }
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector to_vector(const Matrix& m) {
  if (m.cols() != 1) throw FormatError("expected a column vector in artifact");
  return m.col(0);
}

json counters_json(const CostCounters& c) {
  return {{"forward_solves", c.forward_solves}, {"jvp_solves", c.jvp_solves},
          {"vjp_solves", c.vjp_solves},         {"surrogate_solves", c.surrogate_solves},
          {"network_evals", c.network_evals},   {"prior_draws", c.prior_draws},
          {"solver_failures", c.solver_failures}};
}

CostCounters counters_from(const json& j) {
  CostCounters c;
  c.forward_solves = j.at("forward_solves").get<std::uint64_t>();
  c.jvp_solves = j.at("jvp_solves").get<std::uint64_t>();
  c.vjp_solves = j.at("vjp_solves").get<std::uint64_t>();
  c.surrogate_solves = j.at("surrogate_solves").get<std::uint64_t>();
  c.network_evals = j.at("network_evals").get<std::uint64_t>();
  c.prior_draws = j.at("prior_draws").get<std::uint64_t>();
  c.solver_failures = j.at("solver_failures").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string code_version() {
#ifdef DINOMC_VERSION
  return DINOMC_VERSION;
#else
  return "unknown";
#endif
}

void write_matrices(const std::string& path, const std::vector<Matrix>& mats) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os.write(kMagic, sizeof kMagic);
  const std::int64_t n = static_cast<std::int64_t>(mats.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const auto& m : mats) {
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    os.write(reinterpret_cast<const char*>(shape), sizeof shape);
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!os) throw FormatError("short write to " + path);
}

std::vector<Matrix> read_matrices(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("bad magic in " + path);
  std::int64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n < 0 || n > (1 << 20)) throw FormatError("bad matrix count in " + path);
  std::vector<Matrix> out;
  for (std::int64_t k = 0; k < n; ++k) {
    std::int64_t shape[2];
    is.read(reinterpret_cast<char*>(shape), sizeof shape);
    if (!is || shape[0] < 0 || shape[1] < 0) throw FormatError("bad matrix shape in " + path);
    Matrix m(shape[0], shape[1]);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!is) throw FormatError("truncated matrix data in " + path);
    out.push_back(std::move(m));
  }
  return out;
}

bool artifact_exists(const std::string& stem) {
  return std::filesystem::exists(bin_path(stem)) && std::filesystem::exists(json_path(stem));
}

void save_basis(const std::string& stem, const ReducedBasis& basis, const Provenance& prov) {
  write_matrices(bin_path(stem), {basis.decoder(), basis.eigenvalues(), basis.spectrum()});
  write_manifest(stem,
                 {{"kind", to_string(basis.kind())},
                  {"r", basis.rank()},
                  {"d_m", basis.parameter_dim()},
                  {"samples_used", basis.samples_used},
                  {"eigenvalues", to_std(basis.eigenvalues())}},
                 prov);
}

ReducedBasis load_basis(const std::string& stem, PriorPtr prior) {
  const json man = read_manifest(stem);
  auto mats = read_matrices(bin_path(stem));
  if (mats.size() != 3) throw FormatError("basis artifact must hold three arrays");
  ReducedBasis b(std::move(prior), mats[0], to_vector(mats[1]), to_vector(mats[2]),
                 basis_kind_from_string(man.at("kind").get<std::string>()));
  b.samples_used = man.value("samples_used", 0);
  return b;
}

void save_dataset(const std::string& stem, const Dataset& data, const Provenance& prov) {
  std::vector<Matrix> mats = {data.X, data.Y};
  if (data.with_jacobian()) mats.push_back(data.Jac);
  write_matrices(bin_path(stem), mats);
  write_manifest(stem,
                 {{"n_t", data.size()},
                  {"r", data.input_dim()},
                  {"d_y", data.output_dim()},
                  {"with_jacobian", data.with_jacobian()},
                  {"seed", data.seed},
                  {"failures", data.failures},
                  {"basis_id", data.basis_id}},
                 prov);
}

Dataset load_dataset(const std::string& stem) {
  const json man = read_manifest(stem);
  auto mats = read_matrices(bin_path(stem));
  const bool jac = man.at("with_jacobian").get<bool>();
  if (mats.size() != (jac ? 3u : 2u)) throw FormatError("dataset artifact has unexpected array count");
  Dataset d;
  d.X = std::move(mats[0]);
  d.Y = std::move(mats[1]);
  if (jac) d.Jac = std::move(mats[2]);
  d.seed = man.at("seed").get<std::uint64_t>();
  d.failures = man.value("failures", std::uint64_t{0});
  d.basis_id = man.value("basis_id", std::string());
  if (d.X.cols() != d.Y.cols() || (jac && d.Jac.cols() != d.X.rows() * d.X.cols())) {
    throw FormatError("dataset arrays disagree in " + stem);
  }
  return d;
}

void save_network(const std::string& stem, const Mlp& net, const Provenance& prov) {
  write_matrices(bin_path(stem), {net.parameters(), net.output_shift, net.output_scale});
  write_manifest(stem,
                 {{"widths", net.widths()},
                  {"activation", net.activation() == Activation::Gelu ? "gelu" : "identity"},
                  {"parameter_count", net.parameter_count()}},
                 prov);
}

Mlp load_network(const std::string& stem) {
  const json man = read_manifest(stem);
  auto mats = read_matrices(bin_path(stem));
  if (mats.size() != 3) throw FormatError("network artifact must hold three arrays");
  const auto widths = man.at("widths").get<std::vector<int>>();
  const Activation act = man.at("activation").get<std::string>() == "gelu" ? Activation::Gelu : Activation::Identity;
  Mlp net(widths, 0, act);
  net.set_parameters(to_vector(mats[0]));
  net.output_shift = to_vector(mats[1]);
  net.output_scale = to_vector(mats[2]);
  return net;
}

void save_laplace(const std::string& stem, const LaplacePack& pack, const Provenance& prov) {
  write_matrices(bin_path(stem), {pack.m_map, pack.eig.U, pack.eig.d});
  write_manifest(stem,
                 {{"rank", pack.eig.rank()},
                  {"objective", pack.objective},
                  {"gradient_norm", pack.gradient_norm},
                  {"iterations", pack.iterations},
                  {"converged", pack.converged},
                  {"eigenvalues", to_std(pack.eig.d)}},
                 prov);
}

LaplacePack load_laplace(const std::string& stem) {
  const json man = read_manifest(stem);
  auto mats = read_matrices(bin_path(stem));
  if (mats.size() != 3) throw FormatError("laplace artifact must hold three arrays");
  LaplacePack p;
  p.m_map = to_vector(mats[0]);
  p.eig.U = std::move(mats[1]);
  p.eig.d = mats[2].size() == 0 ? Vector() : to_vector(mats[2]);
  p.objective = man.at("objective").get<double>();
  p.gradient_norm = man.at("gradient_norm").get<double>();
  p.iterations = man.at("iterations").get<int>();
  p.converged = man.at("converged").get<bool>();
  return p;
}

void save_chain(const std::string& stem, const ChainRecord& rec, const Provenance& prov) {
  const Index n = rec.steps();
  Matrix flags(3, n);
  for (Index k = 0; k < n; ++k) {
    const auto i = static_cast<std::size_t>(k);
    flags(0, k) = rec.accepted[i];
    flags(1, k) = rec.stage1_pass[i];
    flags(2, k) = rec.failed[i];
  }
  write_matrices(bin_path(stem), {rec.samples, rec.misfits, flags});
  write_manifest(stem,
                 {{"kernel", rec.kernel},
                  {"dt", rec.dt},
                  {"seed", rec.seed},
                  {"burn_in", rec.burn_in},
                  {"n_s", n},
                  {"aborted", rec.aborted},
                  {"acceptance_rate", rec.acceptance_rate()},
                  {"stage1_rate", rec.stage1_rate()},
                  {"stage2_rate", rec.stage2_rate()},
                  {"counters", counters_json(rec.counters)},
                  {"burn_in_counters", counters_json(rec.burn_in_counters)}},
                 prov);
}

ChainRecord load_chain(const std::string& stem) {
  const json man = read_manifest(stem);
  auto mats = read_matrices(bin_path(stem));
  if (mats.size() != 3) throw FormatError("chain artifact must hold three arrays");
  ChainRecord rec;
  rec.kernel = man.at("kernel").get<std::string>();
  rec.dt = man.at("dt").get<double>();
  rec.seed = man.at("seed").get<std::uint64_t>();
  rec.burn_in = man.at("burn_in").get<Index>();
  rec.aborted = man.at("aborted").get<bool>();
  rec.counters = counters_from(man.at("counters"));
  rec.burn_in_counters = counters_from(man.at("burn_in_counters"));
  rec.samples = std::move(mats[0]);
  rec.misfits = to_vector(mats[1]);
  const Matrix& flags = mats[2];
  if (flags.rows() != 3 || flags.cols() + 1 != rec.samples.cols()) throw FormatError("chain arrays disagree in " + stem);
  for (Index k = 0; k < flags.cols(); ++k) {
    rec.accepted.push_back(flags(0, k) != 0.0);
    rec.stage1_pass.push_back(flags(1, k) != 0.0);
    rec.failed.push_back(flags(2, k) != 0.0);
  }
  return rec;
}

}  // namespace dinomc
