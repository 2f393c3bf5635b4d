#include "maxhmm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace maxhmm {

namespace {

using nlohmann::json;

std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ConfigError("failed writing output file: " + path.string());
}

}  // namespace

void write_real_matrix_csv(const std::filesystem::path& path, const Mat3& m) {
  auto out = open_out(path);
  out << "c1,c2,c3\n";
  for (int i = 0; i < 3; ++i)
    out << g9(m(i, 0)) << ',' << g9(m(i, 1)) << ',' << g9(m(i, 2)) << '\n';
  finish(out, path);
}

void write_complex_matrix_csv(const std::filesystem::path& path, const Mat3c& m) {
  auto out = open_out(path);
  out << "Re_c1,Im_c1,Re_c2,Im_c2,Re_c3,Im_c3\n";
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j)
      out << (j ? "," : "") << g9(m(i, j).real()) << ',' << g9(m(i, j).imag());
    out << '\n';
  }
  finish(out, path);
}

namespace {
// diagonal first, then the off-diagonal row-major remainder
constexpr int SWEEP_ORDER[9][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2},
                                   {1, 0}, {1, 2}, {2, 0}, {2, 1}};
}  // namespace

void write_mu_sweep_csv(const std::filesystem::path& path,
                        const std::vector<MuSweepRow>& rows) {
  auto out = open_out(path);
  out << "k";
  for (const auto& ij : SWEEP_ORDER)
    out << ",Re_mu" << (ij[0] + 1) << (ij[1] + 1) << ",Im_mu" << (ij[0] + 1)
        << (ij[1] + 1);
  out << '\n';
  for (const auto& row : rows) {
    out << g9(row.k);
    for (const auto& ij : SWEEP_ORDER) {
      if (row.ok) {
        const Complex v = row.mu(ij[0], ij[1]);
        out << ',' << g9(v.real()) << ',' << g9(v.imag());
      } else {
        out << ",nan,nan";
      }
    }
    out << '\n';
  }
  finish(out, path);
}

void write_resonance_report(const std::filesystem::path& path,
                            const std::vector<MuSweepRow>& rows,
                            const std::vector<ResonanceInterval>& intervals) {
  auto out = open_out(path);
  out << intervals.size() << " resonance interval"
      << (intervals.size() == 1 ? "" : "s") << '\n';
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    double peak = 0.0, k_peak = iv.k_lo;
    for (const auto& row : rows) {
      if (!row.ok || row.k < iv.k_lo || row.k > iv.k_hi) continue;
      const double im = row.mu.diagonal().imag().maxCoeff();
      if (im > peak) {
        peak = im;
        k_peak = row.k;
      }
    }
    out << "interval " << (i + 1) << ": k in [" << g9(iv.k_lo) << ", "
        << g9(iv.k_hi) << "], peak Im(diag mu) = " << g9(peak)
        << " at k = " << g9(k_peak) << '\n';
  }
  finish(out, path);
}

void write_zeroth_slice_csv(const std::filesystem::path& path, const HmmSolution& sol,
                            double delta, const SliceSpec& slice) {
  const StructuredTetMesh& mesh = *sol.macro.mesh;
  if (slice.axis < 0 || slice.axis > 2)
    throw ConfigError("plane slice: axis must be 0, 1, or 2");
  const AxisBox& box = mesh.box;
  if (slice.offset < box.lo[slice.axis] || slice.offset > box.hi[slice.axis])
    throw ConfigError("plane slice: offset outside the domain");
  const double h = (box.hi[slice.axis] - box.lo[slice.axis]) / mesh.n_per_axis;
  int layer = static_cast<int>(std::floor((slice.offset - box.lo[slice.axis]) / h));
  layer = std::clamp(layer, 0, mesh.n_per_axis - 1);

  auto out = open_out(path);
  out << "x,y,z,Re_ux,Im_ux,Re_uy,Im_uy,Re_uz,Im_uz,subdomain\n";
  char buf[320];
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const Vec3 b = mesh.barycenter(static_cast<int>(t));
    const int t_layer =
        static_cast<int>(std::floor((b[slice.axis] - box.lo[slice.axis]) / h));
    if (t_layer != layer) continue;
    const Vec3c v = zeroth_order_field(sol, delta, b);
    std::snprintf(buf, sizeof buf,
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", b[0], b[1],
                  b[2], v[0].real(), v[0].imag(), v[1].real(), v[1].imag(),
                  v[2].real(), v[2].imag(),
                  mesh.subdomain_tag[t] == SubdomainTag::Inside ? 1 : 0);
    out << buf;
  }
  finish(out, path);
}

void CellRunConfig::validate() const {
  if (micro_n < 2) throw ConfigError("cell: micro_n must be at least 2");
  if (!(k > 0.0)) throw ConfigError("cell: wavenumber must be positive");
}

void SweepRunConfig::validate() const {
  if (micro_n < 2) throw ConfigError("musweep: micro_n must be at least 2");
  if (k_grid.empty()) throw ConfigError("musweep: the wavenumber grid is empty");
  for (std::size_t i = 0; i < k_grid.size(); ++i) {
    if (!(k_grid[i] > 0.0))
      throw ConfigError("musweep: wavenumbers must be positive");
    if (i > 0 && k_grid[i] <= k_grid[i - 1])
      throw ConfigError("musweep: the wavenumber grid must be strictly increasing");
  }
}

void SolveRunConfig::validate() const {
  scatter.validate();
  if (slice && (slice->axis < 0 || slice->axis > 2))
    throw ConfigError("solve: slice axis must be 0, 1, or 2");
}

void HmmRunConfig::validate() const {
  hmm.validate();
  if (slice && (slice->axis < 0 || slice->axis > 2))
    throw ConfigError("hmm: slice axis must be 0, 1, or 2");
  if (delta && !(*delta > 0.0))
    throw ConfigError("hmm: the reconstruction cell size delta must be positive");
}

void StudyRunConfig::validate() const { study.validate(); }

namespace {

json load_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) known = true;
    if (!known)
      throw ConfigError("unknown config key \"" + it.key() + "\" in " + where);
  }
}

double get_number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

int get_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
  return j.get<int>();
}

Vec3 get_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(where + " must be an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = get_number(j[i], where);
  return v;
}

Complex get_complex(const json& j, const std::string& where) {
  if (j.is_number()) return Complex(j.get<double>(), 0.0);
  if (!j.is_array() || j.size() != 2)
    throw ConfigError(where + " must be a number or a [re, im] pair");
  return Complex(get_number(j[0], where), get_number(j[1], where));
}

AxisBox get_box(const json& j, const std::string& where) {
  check_keys(j, where, {"lo", "hi"});
  if (!j.contains("lo") || !j.contains("hi"))
    throw ConfigError(where + " needs both \"lo\" and \"hi\" corners");
  return AxisBox{get_vec3(j["lo"], where + ".lo"), get_vec3(j["hi"], where + ".hi")};
}

Mat3 get_mat3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(where + " must be an array of 3 rows");
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    const Vec3 row = get_vec3(j[i], where);
    for (int c = 0; c < 3; ++c) m(i, c) = row[c];
  }
  return m;
}

// shared micro-structure keys of cell/musweep/hmm configs
void read_micro_keys(const json& j, int& micro_n, std::optional<AxisBox>& inclusion,
                     MicroCoefficients& coeffs, const std::string& where) {
  if (j.contains("micro_n")) micro_n = get_int(j["micro_n"], where + ".micro_n");
  if (j.contains("inclusion")) {
    if (j["inclusion"].is_null())
      inclusion.reset();
    else
      inclusion = get_box(j["inclusion"], where + ".inclusion");
  }
  if (j.contains("eps0_inv")) {
    const json& e = j["eps0_inv"];
    if (e.is_number()) {
      coeffs.eps0_inv = {e.get<double>()};
    } else if (e.is_array()) {
      coeffs.eps0_inv.clear();
      for (const auto& v : e)
        coeffs.eps0_inv.push_back(get_number(v, where + ".eps0_inv"));
    } else {
      throw ConfigError(where + ".eps0_inv must be a number or an array");
    }
  }
  if (j.contains("eps1_inv"))
    coeffs.eps1_inv = get_complex(j["eps1_inv"], where + ".eps1_inv");
}

void read_incident(const json& j, IncidentWave& wave, const std::string& where) {
  check_keys(j, where, {"direction", "polarization", "amplitude"});
  if (j.contains("direction"))
    wave.direction = get_vec3(j["direction"], where + ".direction");
  if (j.contains("polarization"))
    wave.polarization = get_vec3(j["polarization"], where + ".polarization");
  if (j.contains("amplitude"))
    wave.amplitude = get_complex(j["amplitude"], where + ".amplitude");
}

// key whitelisting is the caller's job: solve configs keep these keys at the
// top level next to their own
void read_scatter(const json& j, ScatterConfig& sc, const std::string& where) {
  if (j.contains("domain")) sc.domain = get_box(j["domain"], where + ".domain");
  if (j.contains("scatterer"))
    sc.scatterer = get_box(j["scatterer"], where + ".scatterer");
  if (j.contains("mesh_n")) sc.mesh_n = get_int(j["mesh_n"], where + ".mesh_n");
  if (j.contains("k")) sc.k = get_number(j["k"], where + ".k");
  if (j.contains("incident")) read_incident(j["incident"], sc.incident, where + ".incident");
  if (j.contains("allow_boundary_contact")) {
    if (!j["allow_boundary_contact"].is_boolean())
      throw ConfigError(where + ".allow_boundary_contact must be a boolean");
    sc.allow_boundary_contact = j["allow_boundary_contact"].get<bool>();
  }
}

SliceSpec read_slice(const json& j, const std::string& where) {
  check_keys(j, where, {"axis", "offset"});
  SliceSpec s;
  if (j.contains("axis")) s.axis = get_int(j["axis"], where + ".axis");
  if (j.contains("offset")) s.offset = get_number(j["offset"], where + ".offset");
  return s;
}

void read_hmm(const json& j, HmmConfig& cfg, const std::string& where,
              std::initializer_list<const char*> extra_keys) {
  std::vector<const char*> allowed{"scatter",  "micro_n",
                                   "inclusion", "inclusion_boundary_contact",
                                   "eps0_inv",  "eps1_inv"};
  allowed.insert(allowed.end(), extra_keys.begin(), extra_keys.end());
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* a : allowed)
      if (it.key() == a) known = true;
    if (!known)
      throw ConfigError("unknown config key \"" + it.key() + "\" in " + where);
  }
  if (j.contains("scatter")) {
    check_keys(j["scatter"], where + ".scatter",
               {"domain", "scatterer", "mesh_n", "k", "incident",
                "allow_boundary_contact"});
    read_scatter(j["scatter"], cfg.scatter, where + ".scatter");
  }
  std::optional<AxisBox> inclusion = cfg.inclusion;
  read_micro_keys(j, cfg.micro_n, inclusion, cfg.coeffs, where);
  if (!inclusion)
    throw ConfigError(where + ".inclusion must be a box, not null");
  cfg.inclusion = *inclusion;
  if (j.contains("inclusion_boundary_contact")) {
    if (!j["inclusion_boundary_contact"].is_boolean())
      throw ConfigError(where + ".inclusion_boundary_contact must be a boolean");
    cfg.inclusion_boundary_contact = j["inclusion_boundary_contact"].get<bool>();
  }
}

}  // namespace

CellRunConfig load_cell_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_keys(j, "cell config", {"micro_n", "inclusion", "eps0_inv", "eps1_inv", "k"});
  CellRunConfig rc;
  read_micro_keys(j, rc.micro_n, rc.inclusion, rc.coeffs, "cell config");
  if (j.contains("k")) rc.k = get_number(j["k"], "cell config.k");
  return rc;
}

SweepRunConfig load_sweep_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_keys(j, "musweep config",
             {"micro_n", "inclusion", "eps0_inv", "eps1_inv", "k_values", "k_range"});
  SweepRunConfig rc;
  read_micro_keys(j, rc.micro_n, rc.inclusion, rc.coeffs, "musweep config");
  if (j.contains("k_values") == j.contains("k_range"))
    throw ConfigError(
        "musweep config needs exactly one of \"k_values\" and \"k_range\"");
  if (j.contains("k_values")) {
    if (!j["k_values"].is_array())
      throw ConfigError("musweep config.k_values must be an array");
    for (const auto& v : j["k_values"])
      rc.k_grid.push_back(get_number(v, "musweep config.k_values"));
  } else {
    const json& r = j["k_range"];
    if (!r.is_array() || r.size() != 3)
      throw ConfigError("musweep config.k_range must be [start, stop, step]");
    const double start = get_number(r[0], "k_range");
    const double stop = get_number(r[1], "k_range");
    const double step = get_number(r[2], "k_range");
    if (!(step > 0.0) || stop < start)
      throw ConfigError("musweep config.k_range must have stop >= start, step > 0");
    const int count = static_cast<int>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) rc.k_grid.push_back(start + i * step);
  }
  return rc;
}

SolveRunConfig load_solve_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_keys(j, "solve config",
             {"domain", "scatterer", "mesh_n", "k", "incident",
              "allow_boundary_contact", "eps_inv_hom", "mu_hom", "slice"});
  SolveRunConfig rc;
  read_scatter(j, rc.scatter, "solve config");
  if (j.contains("eps_inv_hom"))
    rc.scatter.tensors.eps_inv_hom = get_mat3(j["eps_inv_hom"], "solve config.eps_inv_hom");
  if (j.contains("mu_hom")) {
    check_keys(j["mu_hom"], "solve config.mu_hom", {"re", "im"});
    Mat3 re = Mat3::Identity(), im = Mat3::Zero();
    if (j["mu_hom"].contains("re")) re = get_mat3(j["mu_hom"]["re"], "solve config.mu_hom.re");
    if (j["mu_hom"].contains("im")) im = get_mat3(j["mu_hom"]["im"], "solve config.mu_hom.im");
    rc.scatter.tensors.mu_hom = re.cast<Complex>() + Complex(0.0, 1.0) * im.cast<Complex>();
  }
  rc.scatter.tensors.k = rc.scatter.k;
  if (j.contains("slice")) rc.slice = read_slice(j["slice"], "solve config.slice");
  return rc;
}

HmmRunConfig load_hmm_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  HmmRunConfig rc;
  read_hmm(j, rc.hmm, "hmm config", {"slice", "delta"});
  if (j.contains("slice")) rc.slice = read_slice(j["slice"], "hmm config.slice");
  if (j.contains("delta")) rc.delta = get_number(j["delta"], "hmm config.delta");
  return rc;
}

StudyRunConfig load_study_config(const std::filesystem::path& path) {
  const json j = load_json(path);
  check_keys(j, "study config", {"base", "ns", "ref_macro_n", "ref_micro_n"});
  StudyRunConfig rc;
  if (j.contains("base")) read_hmm(j["base"], rc.study.base, "study config.base", {});
  if (!j.contains("ns") || !j["ns"].is_array() || j["ns"].empty())
    throw ConfigError("study config.ns must be a non-empty array of resolutions");
  rc.study.ns.clear();
  for (const auto& v : j["ns"]) rc.study.ns.push_back(get_int(v, "study config.ns"));
  if (!j.contains("ref_macro_n") || !j.contains("ref_micro_n"))
    throw ConfigError(
        "study config needs both \"ref_macro_n\" and \"ref_micro_n\"");
  rc.study.ref_macro_n = get_int(j["ref_macro_n"], "study config.ref_macro_n");
  rc.study.ref_micro_n = get_int(j["ref_micro_n"], "study config.ref_micro_n");
  return rc;
}

}  // namespace maxhmm
