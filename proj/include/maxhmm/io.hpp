#pragma once

#include "maxhmm/hmm.hpp"

#include <filesystem>
#include <optional>

namespace maxhmm {

// 3x3 tensor tables, one matrix row per csv line
void write_real_matrix_csv(const std::filesystem::path& path, const Mat3& m);
void write_complex_matrix_csv(const std::filesystem::path& path, const Mat3c& m);

// permeability sweep table; failed rows keep their k and carry nan entries
void write_mu_sweep_csv(const std::filesystem::path& path,
                        const std::vector<MuSweepRow>& rows);

// flagged intervals, each with the peak of Im(diag mu) located inside it
void write_resonance_report(const std::filesystem::path& path,
                            const std::vector<MuSweepRow>& rows,
                            const std::vector<ResonanceInterval>& intervals);

struct SliceSpec {
  int axis = 1;
  double offset = 0.5;
};

// slice of the zeroth-order reconstruction; same layer convention and columns
// as the macro field slice
void write_zeroth_slice_csv(const std::filesystem::path& path, const HmmSolution& sol,
                            double delta, const SliceSpec& slice);

// Command parameter records, filled from JSON config files.  Geometry and
// coefficient checks beyond the basic ranges happen in the owning pipelines.

struct CellRunConfig {
  int micro_n = 8;
  std::optional<AxisBox> inclusion{
      AxisBox{Vec3::Constant(0.25), Vec3::Constant(0.75)}};
  MicroCoefficients coeffs;
  double k = 12.0;
  void validate() const;
};

struct SweepRunConfig {
  int micro_n = 12;
  std::optional<AxisBox> inclusion{
      AxisBox{Vec3::Constant(0.25), Vec3::Constant(0.75)}};
  MicroCoefficients coeffs;
  std::vector<double> k_grid;  // strictly increasing, positive
  void validate() const;
};

struct SolveRunConfig {
  ScatterConfig scatter;  // tensors read literally from the config
  std::optional<SliceSpec> slice;
  void validate() const;
};

struct HmmRunConfig {
  HmmConfig hmm;
  std::optional<SliceSpec> slice;
  std::optional<double> delta;  // cell size for the reconstructed slice
  void validate() const;
};

struct StudyRunConfig {
  StudyConfig study;  // cache_dir is supplied by the caller, not the file
  void validate() const;
};

// Parse one command's JSON file; unknown keys are rejected so typos fail
// loudly.  All keys are documented in docs/config_schema.json.
CellRunConfig load_cell_config(const std::filesystem::path& path);
SweepRunConfig load_sweep_config(const std::filesystem::path& path);
SolveRunConfig load_solve_config(const std::filesystem::path& path);
HmmRunConfig load_hmm_config(const std::filesystem::path& path);
StudyRunConfig load_study_config(const std::filesystem::path& path);

}  // namespace maxhmm
