#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlf/system.hpp"

namespace qlf {

struct InputSpec {
  enum class Kind { lowpass_tone, quadrature_tone, zero, reference_only };
  Kind kind = Kind::zero;
  double amplitude = 0.0;  // volts, on the v_fs scale
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
};

/// Per-clock binary decisions for all channels, bit packed. Bit index
/// k * channels + m lives in byte (index >> 3), bit (index & 7), +1 <-> 1.
/// Reference channels, when present, occupy the first columns.
struct ControlTrace {
  std::int64_t num_periods = 0;
  int channels = 0;
  int ref_channels = 0;
  double t_s = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> labels;
  std::vector<std::uint8_t> bits;

  int get(std::int64_t k, int m) const {
    const std::uint64_t idx = (std::uint64_t)k * channels + m;
    return (bits[idx >> 3] >> (idx & 7)) & 1 ? 1 : -1;
  }
  void set(std::int64_t k, int m, int value) {
    const std::uint64_t idx = (std::uint64_t)k * channels + m;
    if (value > 0)
      bits[idx >> 3] |= (std::uint8_t)(1u << (idx & 7));
    else
      bits[idx >> 3] &= (std::uint8_t)~(1u << (idx & 7));
  }
  void resize(std::int64_t k, int m) {
    num_periods = k;
    channels = m;
    bits.assign(((std::uint64_t)k * m + 7) / 8, 0);
  }

  void save(const std::string& path) const;
  static ControlTrace load(const std::string& path);
};

/// Snapshots of selected state rows at t = k * t_s / substeps.
struct StateTrace {
  std::vector<int> rows;
  int substeps = 1;
  double dt = 0.0;
  Mat data;  // rows.size() x (num_periods * substeps + 1)
};

struct SimOptions {
  bool record_states = false;
  std::vector<int> record_rows;  // empty = all rows
  int substeps = 1;              // >1 requires tau_dc == 0
  double full_scale = 1.0;
  double blowup_bound = 0.0;     // 0 -> 1e3 * full_scale
  std::uint64_t seed = 0;        // reference-sequence seed
  Vec initial_state;             // model states at t = 0 (default zeros)
};

struct SimResult {
  ControlTrace trace;
  StateTrace states;
  bool stable = true;
  std::int64_t first_unstable_period = -1;
  double max_abs_state = 0.0;
};

/// Clock-accurate simulation: the tone input is embedded as an appended
/// autonomous oscillator so every hold interval is homogeneous LTI and each
/// period advances through precomputed discretize() blocks (two blocks when
/// tau_dc > 0). Decisions are formed at t = k T_s from sign(obs x), recorded,
/// then applied over the next hold interval. Bit-exact for identical inputs.
SimResult simulate(const Frontend& fe, const InputSpec& input, std::int64_t num_periods,
                   const SimOptions& options = {});

/// Adds reference DAC columns at the first stage (pair) with gain
/// amplitude_ratio * |DAC gain|; the +-1 sequence itself is drawn per period
/// from SimOptions::seed and recorded as the leading trace columns.
Frontend inject_reference(const Frontend& fe, double amplitude_ratio = 0.1);

/// Sup over time of ||(x_l, x_bar_l)||_2 per quadrature pair (|x_l| per state
/// for low-pass traces). The trace must have recorded all model rows.
std::vector<double> max_state_norm(const StateTrace& trace, bool quadrature);

}  // namespace qlf
