#pragma once

// Gaussian frequency-selective interference channel: the physical instance
// description, its normalized form, random instance generators (including
// the 7-cell hexagonal downlink layout), and JSON serialization.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "iwf/error.hpp"
#include "iwf/rng.hpp"

namespace iwf {

// Marks a per-carrier spectral mask as absent. Treated explicitly by every
// consumer; never used as an ordinary large number.
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

inline bool is_unbounded(double v) noexcept { return std::isinf(v) && v > 0; }

// Full physical description of a Q-link, N-carrier interference channel.
//
// Index conventions: link q is the pair (transmitter q -> receiver q);
// raw_gain(q, r, k) and distance(q, r) refer to the path from transmitter r
// to receiver q.
struct InterferenceChannel {
  int q_count = 0;
  int n_carriers = 0;
  std::vector<std::complex<double>> raw_gain;  // (q, r, k), row-major
  Eigen::MatrixXd distance;                    // Q x Q
  double pathloss_exp = 2.5;
  Eigen::VectorXd budget;     // P_q, energy per transmitted symbol
  Eigen::MatrixXd noise_psd;  // Q x N
  Eigen::MatrixXd mask;       // Q x N, absolute power, kUnbounded allowed
  Eigen::VectorXd gap;        // Gamma_q >= 1

  // Unit distances, budgets, noise and gaps; no masks; all gains zero.
  static InterferenceChannel zeros(int q_count, int n_carriers) {
    if (q_count < 1 || n_carriers < 1) throw ParameterError("channel dimensions must be >= 1");
    InterferenceChannel ch;
    ch.q_count = q_count;
    ch.n_carriers = n_carriers;
    ch.raw_gain.assign(static_cast<std::size_t>(q_count) * q_count * n_carriers, {0.0, 0.0});
    ch.distance = Eigen::MatrixXd::Ones(q_count, q_count);
    ch.budget = Eigen::VectorXd::Ones(q_count);
    ch.noise_psd = Eigen::MatrixXd::Ones(q_count, n_carriers);
    ch.mask = Eigen::MatrixXd::Constant(q_count, n_carriers, kUnbounded);
    ch.gap = Eigen::VectorXd::Ones(q_count);
    return ch;
  }

  std::complex<double>& raw(int q, int r, int k) { return raw_gain[index(q, r, k)]; }
  const std::complex<double>& raw(int q, int r, int k) const { return raw_gain[index(q, r, k)]; }

  // Throws ParameterError on the first violated invariant.
  void validate() const {
    if (q_count < 1 || n_carriers < 1) throw ParameterError("channel dimensions must be >= 1");
    const auto qn = static_cast<Eigen::Index>(q_count);
    const auto nn = static_cast<Eigen::Index>(n_carriers);
    if (raw_gain.size() != static_cast<std::size_t>(q_count) * q_count * n_carriers)
      throw ParameterError("raw_gain has wrong size");
    if (distance.rows() != qn || distance.cols() != qn) throw ParameterError("distance must be Q x Q");
    if (budget.size() != qn || gap.size() != qn) throw ParameterError("budget/gap must have Q entries");
    if (noise_psd.rows() != qn || noise_psd.cols() != nn) throw ParameterError("noise_psd must be Q x N");
    if (mask.rows() != qn || mask.cols() != nn) throw ParameterError("mask must be Q x N");
    if (!(pathloss_exp > 0) || !std::isfinite(pathloss_exp))
      throw ParameterError("pathloss exponent must be positive");
    for (const auto& h : raw_gain)
      if (!std::isfinite(h.real()) || !std::isfinite(h.imag())) throw ParameterError("raw gains must be finite");
    if (!(distance.array() > 0).all() || !distance.allFinite())
      throw ParameterError("distances must be strictly positive");
    if (!(budget.array() > 0).all() || !budget.allFinite()) throw ParameterError("budgets must be strictly positive");
    if (!(noise_psd.array() > 0).all() || !noise_psd.allFinite())
      throw ParameterError("noise PSD must be strictly positive");
    if (!(gap.array() >= 1.0).all() || !gap.allFinite()) throw ParameterError("gap must be >= 1 for every user");
    for (int q = 0; q < q_count; ++q) {
      double total = 0;
      for (int k = 0; k < n_carriers; ++k) {
        const double m = mask(q, k);
        if (!(m > 0)) throw ParameterError("mask entries must be positive");
        total += m / budget(q);
      }
      if (!(total > n_carriers))
        throw ParameterError("normalized mask of user " + std::to_string(q) + " must sum to more than N");
    }
  }

 private:
  std::size_t index(int q, int r, int k) const {
    return (static_cast<std::size_t>(q) * q_count + r) * n_carriers + k;
  }
};

// Normalized channel: |H_qr(k)|^2 = |Hbar_qr(k)|^2 P_r / d_qr^gamma, direct
// entries additionally divided by the gap, and masks normalized by P_q.
struct NormalizedChannel {
  int q_count = 0;
  int n_carriers = 0;
  std::vector<double> gain2;  // (q, r, k), row-major
  Eigen::MatrixXd noise_psd;  // Q x N
  Eigen::MatrixXd mask_norm;  // Q x N, kUnbounded allowed

  double gain(int q, int r, int k) const { return gain2[index(q, r, k)]; }
  double& gain(int q, int r, int k) { return gain2[index(q, r, k)]; }

  static NormalizedChannel zeros(int q_count, int n_carriers) {
    NormalizedChannel ch;
    ch.q_count = q_count;
    ch.n_carriers = n_carriers;
    ch.gain2.assign(static_cast<std::size_t>(q_count) * q_count * n_carriers, 0.0);
    ch.noise_psd = Eigen::MatrixXd::Ones(q_count, n_carriers);
    ch.mask_norm = Eigen::MatrixXd::Constant(q_count, n_carriers, kUnbounded);
    return ch;
  }

 private:
  std::size_t index(int q, int r, int k) const {
    return (static_cast<std::size_t>(q) * q_count + r) * n_carriers + k;
  }
};

inline NormalizedChannel normalize(const InterferenceChannel& ch) {
  ch.validate();
  NormalizedChannel out = NormalizedChannel::zeros(ch.q_count, ch.n_carriers);
  for (int q = 0; q < ch.q_count; ++q) {
    for (int r = 0; r < ch.q_count; ++r) {
      double scale = ch.budget(r) / std::pow(ch.distance(q, r), ch.pathloss_exp);
      if (q == r) scale /= ch.gap(q);
      for (int k = 0; k < ch.n_carriers; ++k) out.gain(q, r, k) = std::norm(ch.raw(q, r, k)) * scale;
    }
  }
  out.noise_psd = ch.noise_psd;
  for (int q = 0; q < ch.q_count; ++q)
    for (int k = 0; k < ch.n_carriers; ++k) {
      const double m = ch.mask(q, k);
      out.mask_norm(q, k) = is_unbounded(m) ? kUnbounded : m / ch.budget(q);
    }
  return out;
}

// N-point DFT of L i.i.d. CN(0, 1) taps:
//   H(k) = sum_l h_l exp(-i 2 pi k l / N),  k = 0..N-1.
inline std::vector<std::complex<double>> sample_rayleigh_response(int taps, int n_carriers,
                                                                  std::uint64_t seed) {
  if (taps < 1 || taps > n_carriers) throw ParameterError("taps must satisfy 1 <= L <= N");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::vector<std::complex<double>> h(static_cast<std::size_t>(taps));
  for (auto& tap : h) {
    const double re = normal(rng);
    const double im = normal(rng);
    tap = {re, im};
  }
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n_carriers));
  for (int k = 0; k < n_carriers; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (int l = 0; l < taps; ++l) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((static_cast<long long>(k) * l) % n_carriers) /
                           n_carriers;
      acc += h[static_cast<std::size_t>(l)] * std::polar(1.0, phase);
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

// Sub-stream seed for the (q, r) link response.
inline std::uint64_t link_seed(std::uint64_t master, int q, int r) {
  return derive_seed(master, {0x4C494E4BULL, static_cast<std::uint64_t>(q), static_cast<std::uint64_t>(r)});
}

// ---------------------------------------------------------------------------
// Hexagonal 7-cell layout
// ---------------------------------------------------------------------------

struct Point {
  double x = 0;
  double y = 0;
};

inline double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct HexNetworkParams {
  int taps = 6;
  int n_carriers = 16;
  double gamma = 2.5;
  double snr_db = 7.0;
  std::uint64_t seed = 0;
  double gap = 1.0;
  // Per-carrier mask as a multiple of the budget; kUnbounded for no mask.
  double mask_factor = kUnbounded;
  bool cross_links = true;
};

// Geometry of the 7-cell layout with circumradius 1: cell 0 at the origin,
// cells 1..6 at distance sqrt(3) in directions 30 + 60 j degrees.
struct HexGeometry {
  static constexpr int kCells = 7;
  std::vector<Point> base_station;
  std::vector<Point> corner;  // MT position at r = 0
  std::vector<Point> mobile;  // MT position at the requested r

  // Corner convention: cell 0 uses its +x vertex. Each outer cell uses one of
  // the two vertices it shares with cell 0 (the ones nearest the network
  // center); ties are broken towards the vertex at angle 60 j degrees, which
  // makes the outer layout invariant under 60 degree rotation.
  static HexGeometry build(double r) {
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("r must lie in [0, 1)");
    HexGeometry g;
    const double s3 = std::sqrt(3.0);
    g.base_station.push_back({0.0, 0.0});
    g.corner.push_back({1.0, 0.0});
    for (int j = 0; j < 6; ++j) {
      const double a = (30.0 + 60.0 * j) * std::numbers::pi / 180.0;
      g.base_station.push_back({s3 * std::cos(a), s3 * std::sin(a)});
      const double v = (60.0 * j) * std::numbers::pi / 180.0;
      g.corner.push_back({std::cos(v), std::sin(v)});
    }
    for (int q = 0; q < kCells; ++q) {
      const Point c = g.corner[static_cast<std::size_t>(q)];
      const Point b = g.base_station[static_cast<std::size_t>(q)];
      g.mobile.push_back({c.x + r * (b.x - c.x), c.y + r * (b.y - c.y)});
    }
    return g;
  }

  // d(q, r): BS r to MT q.
  Eigen::MatrixXd distances() const {
    Eigen::MatrixXd d(kCells, kCells);
    for (int q = 0; q < kCells; ++q)
      for (int r = 0; r < kCells; ++r)
        d(q, r) = dist(mobile[static_cast<std::size_t>(q)], base_station[static_cast<std::size_t>(r)]);
    return d;
  }
};

inline InterferenceChannel build_hex_network(double r, const HexNetworkParams& params) {
  const HexGeometry geo = HexGeometry::build(r);
  const int q_count = HexGeometry::kCells;
  InterferenceChannel ch = InterferenceChannel::zeros(q_count, params.n_carriers);
  ch.distance = geo.distances();
  ch.pathloss_exp = params.gamma;
  ch.gap = Eigen::VectorXd::Constant(q_count, params.gap);
  const double inv_snr = std::pow(10.0, -params.snr_db / 10.0);
  for (int q = 0; q < q_count; ++q) {
    ch.noise_psd.row(q).setConstant(ch.budget(q) * inv_snr);
    ch.mask.row(q).setConstant(is_unbounded(params.mask_factor) ? kUnbounded : params.mask_factor * ch.budget(q));
  }
  for (int q = 0; q < q_count; ++q) {
    for (int s = 0; s < q_count; ++s) {
      if (q != s && !params.cross_links) continue;
      const auto h = sample_rayleigh_response(params.taps, params.n_carriers, link_seed(params.seed, q, s));
      for (int k = 0; k < params.n_carriers; ++k) ch.raw(q, s, k) = h[static_cast<std::size_t>(k)];
    }
  }
  ch.validate();
  return ch;
}

// ---------------------------------------------------------------------------
// Generic random instances (no geometry) for experiments and tests
// ---------------------------------------------------------------------------

struct RandomChannelParams {
  int q_count = 3;
  int n_carriers = 4;
  int taps = 2;
  double gamma = 2.5;
  double direct_distance = 1.0;
  double cross_distance_min = 2.0;
  double cross_distance_max = 5.0;
  double noise = 0.1;
  // Masks drawn per carrier uniformly from [mask_min, mask_max] times P_q;
  // mask_max <= 0 disables masks.
  double mask_min = 0.0;
  double mask_max = 0.0;
  std::uint64_t seed = 0;
};

inline InterferenceChannel random_channel(const RandomChannelParams& p) {
  InterferenceChannel ch = InterferenceChannel::zeros(p.q_count, p.n_carriers);
  ch.pathloss_exp = p.gamma;
  Rng rng(derive_seed(p.seed, {0x47454F4DULL}));
  std::uniform_real_distribution<double> cross(p.cross_distance_min, p.cross_distance_max);
  for (int q = 0; q < p.q_count; ++q)
    for (int r = 0; r < p.q_count; ++r) ch.distance(q, r) = (q == r) ? p.direct_distance : cross(rng);
  ch.noise_psd.setConstant(p.noise);
  if (p.mask_max > 0) {
    // Masks must leave room above the budget: resample a row until it does.
    std::uniform_real_distribution<double> mask(p.mask_min, p.mask_max);
    for (int q = 0; q < p.q_count; ++q) {
      for (int attempt = 0;; ++attempt) {
        double total = 0;
        for (int k = 0; k < p.n_carriers; ++k) total += (ch.mask(q, k) = mask(rng));
        if (total > p.n_carriers * 1.05) break;
        if (attempt > 1000) throw ParameterError("mask range cannot exceed the budget");
      }
    }
  }
  for (int q = 0; q < p.q_count; ++q)
    for (int r = 0; r < p.q_count; ++r) {
      const auto h = sample_rayleigh_response(p.taps, p.n_carriers, link_seed(p.seed, q, r));
      for (int k = 0; k < p.n_carriers; ++k) ch.raw(q, r, k) = h[static_cast<std::size_t>(k)];
    }
  ch.validate();
  return ch;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline constexpr int kChannelSchemaVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m, bool nullable_inf = false) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (nullable_inf && is_unbounded(m(i, j)))
        row.push_back(nullptr);
      else
        row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                                        const std::string& name, bool nullable_inf = false) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ParameterError(name + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ParameterError(name + "[" + std::to_string(i) + "]: expected " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (v.is_null() && nullable_inf)
        m(i, c) = kUnbounded;
      else if (v.is_number())
        m(i, c) = v.get<double>();
      else
        throw ParameterError(name + ": non-numeric entry");
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const InterferenceChannel& ch) {
  nlohmann::json gains = nlohmann::json::array();
  for (int q = 0; q < ch.q_count; ++q) {
    nlohmann::json per_q = nlohmann::json::array();
    for (int r = 0; r < ch.q_count; ++r) {
      nlohmann::json per_r = nlohmann::json::array();
      for (int k = 0; k < ch.n_carriers; ++k) per_r.push_back({ch.raw(q, r, k).real(), ch.raw(q, r, k).imag()});
      per_q.push_back(std::move(per_r));
    }
    gains.push_back(std::move(per_q));
  }
  nlohmann::json j;
  j["schema_version"] = kChannelSchemaVersion;
  j["q_count"] = ch.q_count;
  j["n_carriers"] = ch.n_carriers;
  j["raw_gain"] = std::move(gains);
  j["distance"] = detail::matrix_to_json(ch.distance);
  j["pathloss_exp"] = ch.pathloss_exp;
  j["budget"] = std::vector<double>(ch.budget.data(), ch.budget.data() + ch.budget.size());
  j["noise_psd"] = detail::matrix_to_json(ch.noise_psd);
  j["mask"] = detail::matrix_to_json(ch.mask, true);
  j["gap"] = std::vector<double>(ch.gap.data(), ch.gap.data() + ch.gap.size());
  return j;
}

inline InterferenceChannel channel_from_json(const nlohmann::json& j) {
  try {
    if (!j.contains("schema_version")) throw ParameterError("channel document lacks schema_version");
    if (j.at("schema_version").get<int>() != kChannelSchemaVersion)
      throw ParameterError("unsupported channel schema_version");
    const int q_count = j.at("q_count").get<int>();
    const int n = j.at("n_carriers").get<int>();
    InterferenceChannel ch = InterferenceChannel::zeros(q_count, n);
    const auto& gains = j.at("raw_gain");
    if (!gains.is_array() || static_cast<int>(gains.size()) != q_count) throw ParameterError("raw_gain: bad shape");
    for (int q = 0; q < q_count; ++q) {
      const auto& per_q = gains[static_cast<std::size_t>(q)];
      if (!per_q.is_array() || static_cast<int>(per_q.size()) != q_count) throw ParameterError("raw_gain: bad shape");
      for (int r = 0; r < q_count; ++r) {
        const auto& per_r = per_q[static_cast<std::size_t>(r)];
        if (!per_r.is_array() || static_cast<int>(per_r.size()) != n) throw ParameterError("raw_gain: bad shape");
        for (int k = 0; k < n; ++k) {
          const auto& c = per_r[static_cast<std::size_t>(k)];
          if (!c.is_array() || c.size() != 2) throw ParameterError("raw_gain: entries must be [re, im]");
          ch.raw(q, r, k) = {c[0].get<double>(), c[1].get<double>()};
        }
      }
    }
    ch.distance = detail::matrix_from_json(j.at("distance"), q_count, q_count, "distance");
    ch.pathloss_exp = j.at("pathloss_exp").get<double>();
    const auto budget = j.at("budget").get<std::vector<double>>();
    const auto gap = j.at("gap").get<std::vector<double>>();
    if (static_cast<int>(budget.size()) != q_count || static_cast<int>(gap.size()) != q_count)
      throw ParameterError("budget/gap: expected Q entries");
    ch.budget = Eigen::Map<const Eigen::VectorXd>(budget.data(), q_count);
    ch.gap = Eigen::Map<const Eigen::VectorXd>(gap.data(), q_count);
    ch.noise_psd = detail::matrix_from_json(j.at("noise_psd"), q_count, n, "noise_psd");
    ch.mask = detail::matrix_from_json(j.at("mask"), q_count, n, "mask", true);
    ch.validate();
    return ch;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed channel document: ") + e.what());
  }
}

}  // namespace iwf
