#pragma once

// Dual-hop amplify-and-forward MIMO relay network model and block-coordinate
// LMMSE transceiver design. The sum MSE over destinations is, with all other
// blocks frozen, an exact QM function of each equalizer, relay matrix, and
// source precoder stack; every block update therefore solves a QMP instance
// to global optimality, which makes the sweep monotone in total MSE.
//
// Signal model per destination k:
//   x_j = sum_i H_sr[i][j] sum_m P_im s_im + n1_j          (relay input)
//   y_k = sum_j H_rd[j][k] F_j x_j + n2_k                  (destination input)
//   error_k = G_k y_k - stack_i(s_ik)
// with mutually independent zero-mean signals s_im and noises.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qmp/closed_form.hpp"
#include "qmp/errors.hpp"
#include "qmp/matrix.hpp"
#include "qmp/qm_model.hpp"
#include "qmp/random.hpp"
#include "qmp/solver.hpp"

namespace qmp {

struct SourceNode {
  std::size_t antennas = 0;
  double power = 0.0;
  // Covariance of s_ik per destination; an empty matrix means the source does
  // not transmit to that destination.
  std::vector<CMatrix> signal_cov;
  // Optional cap on the pre-equalizer interference power this source injects
  // at destinations it does not serve. Zero disables the constraint.
  double interference_cap = 0.0;
};

struct RelayNode {
  std::size_t rx_antennas = 0;
  std::size_t tx_antennas = 0;
  double power = 0.0;
  CMatrix noise_cov;  // rx_antennas x rx_antennas, positive definite
  // Pass-through stage (identity gain, not optimized, no power constraint);
  // used to express single-hop scenarios inside the dual-hop model.
  bool fixed_identity = false;
};

struct DestinationNode {
  std::size_t antennas = 0;
  CMatrix noise_cov;  // positive definite
};

struct RelayNetwork {
  std::vector<SourceNode> sources;
  std::vector<RelayNode> relays;
  std::vector<DestinationNode> destinations;
  std::vector<std::vector<CMatrix>> h_sr;  // [i][j]: rx_j x antennas_i
  std::vector<std::vector<CMatrix>> h_rd;  // [j][k]: antennas_k x tx_j

  std::size_t num_sources() const { return sources.size(); }
  std::size_t num_relays() const { return relays.size(); }
  std::size_t num_destinations() const { return destinations.size(); }

  std::size_t streams(std::size_t i, std::size_t k) const {
    return sources[i].signal_cov[k].rows();
  }
  std::size_t dest_streams(std::size_t k) const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) d += streams(i, k);
    return d;
  }
};

inline std::vector<std::string> validate_network(const RelayNetwork& net) {
  std::vector<std::string> out;
  const std::size_t ns = net.num_sources(), nr = net.num_relays(), nd = net.num_destinations();
  if (net.h_sr.size() != ns) out.push_back("h_sr: wrong source count");
  if (net.h_rd.size() != nr) out.push_back("h_rd: wrong relay count");
  for (std::size_t i = 0; i < ns; ++i) {
    const auto& src = net.sources[i];
    if (!(src.power > 0.0)) out.push_back("source " + std::to_string(i) + ": power must be > 0");
    if (src.signal_cov.size() != nd)
      out.push_back("source " + std::to_string(i) + ": needs one covariance per destination");
    for (std::size_t k = 0; k < src.signal_cov.size(); ++k) {
      const CMatrix& r = src.signal_cov[k];
      if (!r.empty() && (!r.square() || !is_hermitian(r, 1e-10)))
        out.push_back("source " + std::to_string(i) + ": signal covariance " +
                      std::to_string(k) + " not Hermitian");
    }
    if (net.h_sr.size() == ns && net.h_sr[i].size() != nr)
      out.push_back("h_sr[" + std::to_string(i) + "]: wrong relay count");
    for (std::size_t j = 0; net.h_sr.size() == ns && j < net.h_sr[i].size(); ++j)
      if (net.h_sr[i][j].rows() != net.relays[j].rx_antennas ||
          net.h_sr[i][j].cols() != src.antennas)
        out.push_back("h_sr[" + std::to_string(i) + "][" + std::to_string(j) + "]: bad shape");
  }
  for (std::size_t j = 0; j < nr; ++j) {
    const auto& rel = net.relays[j];
    if (!rel.fixed_identity && !(rel.power > 0.0))
      out.push_back("relay " + std::to_string(j) + ": power must be > 0");
    if (rel.noise_cov.rows() != rel.rx_antennas || !is_hermitian(rel.noise_cov, 1e-10))
      out.push_back("relay " + std::to_string(j) + ": bad noise covariance");
    if (net.h_rd.size() == nr && net.h_rd[j].size() != nd)
      out.push_back("h_rd[" + std::to_string(j) + "]: wrong destination count");
    for (std::size_t k = 0; net.h_rd.size() == nr && k < net.h_rd[j].size(); ++k)
      if (net.h_rd[j][k].rows() != net.destinations[k].antennas ||
          net.h_rd[j][k].cols() != rel.tx_antennas)
        out.push_back("h_rd[" + std::to_string(j) + "][" + std::to_string(k) + "]: bad shape");
  }
  for (std::size_t k = 0; k < nd; ++k)
    if (net.destinations[k].noise_cov.rows() != net.destinations[k].antennas ||
        !is_hermitian(net.destinations[k].noise_cov, 1e-10))
      out.push_back("destination " + std::to_string(k) + ": bad noise covariance");
  return out;
}

struct TransceiverState {
  std::vector<std::vector<CMatrix>> precoders;  // [i][k]: antennas_i x streams(i,k)
  std::vector<CMatrix> relay_gains;             // [j]: tx_j x rx_j
  std::vector<CMatrix> equalizers;              // [k]: dest_streams(k) x antennas_k
};

struct TraceRecord {
  std::size_t sweep = 0;
  std::string block;
  double mse = 0.0;
  double margin_min = 0.0;  // smallest relative power margin after the update
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  double final_mse = 0.0;
  std::size_t sweeps = 0;
};

// ---------------------------------------------------------------------------
// Second-order statistics.

// R_x_j = sum_i H_sr[i][j] (sum_k P_ik R_ik P_ik^H) H_sr[i][j]^H + R_n1_j.
inline CMatrix relay_input_covariance(const RelayNetwork& net, const TransceiverState& state,
                                      std::size_t j) {
  const std::size_t m = net.relays[j].rx_antennas;
  CMatrix rx(m, m);
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    CMatrix tx_cov(net.sources[i].antennas, net.sources[i].antennas);
    for (std::size_t k = 0; k < net.num_destinations(); ++k) {
      if (net.streams(i, k) == 0) continue;
      const CMatrix& p = state.precoders[i][k];
      tx_cov += p * net.sources[i].signal_cov[k] * adjoint(p);
    }
    rx += net.h_sr[i][j] * tx_cov * adjoint(net.h_sr[i][j]);
  }
  rx += net.relays[j].noise_cov;
  return hermitian_part(rx);
}

namespace detail {

// Pre-equalizer source->destination chain sum_j H_rd[j][k] F_j H_sr[i][j].
inline CMatrix pre_chain(const RelayNetwork& net, const TransceiverState& state,
                         std::size_t k, std::size_t i) {
  CMatrix w(net.destinations[k].antennas, net.sources[i].antennas);
  for (std::size_t j = 0; j < net.num_relays(); ++j)
    w += net.h_rd[j][k] * state.relay_gains[j] * net.h_sr[i][j];
  return w;
}

// Covariance of the total noise reaching destination k (relay noise forwarded
// through the second hop plus local noise).
inline CMatrix forwarded_noise_cov(const RelayNetwork& net, const TransceiverState& state,
                                   std::size_t k) {
  CMatrix rv = net.destinations[k].noise_cov;
  for (std::size_t j = 0; j < net.num_relays(); ++j) {
    const CMatrix hf = net.h_rd[j][k] * state.relay_gains[j];
    rv += hf * net.relays[j].noise_cov * adjoint(hf);
  }
  return hermitian_part(rv);
}

struct StackEntry {
  std::size_t source = 0;
  std::size_t offset = 0;
  std::size_t width = 0;
};

inline std::vector<StackEntry> stack_layout(const RelayNetwork& net, std::size_t k) {
  std::vector<StackEntry> layout;
  std::size_t off = 0;
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    const std::size_t w = net.streams(i, k);
    if (w == 0) continue;  // zero-stream sources are excluded from the stack
    layout.push_back({i, off, w});
    off += w;
  }
  return layout;
}

}  // namespace detail

// Covariance of y_k.
inline CMatrix received_covariance(const RelayNetwork& net, const TransceiverState& state,
                                   std::size_t k) {
  CMatrix ry = detail::forwarded_noise_cov(net, state, k);
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    const CMatrix w = detail::pre_chain(net, state, k, i);
    for (std::size_t m = 0; m < net.num_destinations(); ++m) {
      if (net.streams(i, m) == 0) continue;
      const CMatrix t = w * state.precoders[i][m];
      ry += t * net.sources[i].signal_cov[m] * adjoint(t);
    }
  }
  return hermitian_part(ry);
}

// Cross covariance E{y_k s_k^H} with s_k the desired stack at destination k.
inline CMatrix received_cross_covariance(const RelayNetwork& net,
                                         const TransceiverState& state, std::size_t k) {
  const std::size_t d = net.dest_streams(k);
  CMatrix c(net.destinations[k].antennas, d);
  for (const auto& entry : detail::stack_layout(net, k)) {
    const CMatrix block = detail::pre_chain(net, state, k, entry.source) *
                          state.precoders[entry.source][k] *
                          net.sources[entry.source].signal_cov[k];
    for (std::size_t r = 0; r < block.rows(); ++r)
      for (std::size_t cI = 0; cI < entry.width; ++cI) c(r, entry.offset + cI) = block(r, cI);
  }
  return c;
}

inline double desired_signal_energy(const RelayNetwork& net, std::size_t k) {
  double e = 0.0;
  for (std::size_t i = 0; i < net.num_sources(); ++i)
    if (net.streams(i, k) > 0) e += trace(net.sources[i].signal_cov[k]).real();
  return e;
}

// Exact analytic MSE at destination k.
inline double destination_mse(const RelayNetwork& net, const TransceiverState& state,
                              std::size_t k) {
  if (net.dest_streams(k) == 0) return 0.0;
  const CMatrix& g = state.equalizers[k];
  const CMatrix ry = received_covariance(net, state, k);
  const CMatrix c = received_cross_covariance(net, state, k);
  const double quad = trace_product(g * ry, adjoint(g)).real();
  const double cross = trace_product(g, c).real();
  return quad - 2.0 * cross + desired_signal_energy(net, k);
}

inline double total_mse(const RelayNetwork& net, const TransceiverState& state) {
  double mse = 0.0;
  for (std::size_t k = 0; k < net.num_destinations(); ++k)
    mse += destination_mse(net, state, k);
  return mse;
}

// ---------------------------------------------------------------------------
// Power accounting.

inline double source_power_used(const RelayNetwork& net, const TransceiverState& state,
                                std::size_t i) {
  double used = 0.0;
  for (std::size_t k = 0; k < net.num_destinations(); ++k) {
    if (net.streams(i, k) == 0) continue;
    const CMatrix& p = state.precoders[i][k];
    used += trace_product(p * net.sources[i].signal_cov[k], adjoint(p)).real();
  }
  return used;
}

inline double relay_power_used(const RelayNetwork& net, const TransceiverState& state,
                               std::size_t j) {
  const CMatrix rx = relay_input_covariance(net, state, j);
  const CMatrix& f = state.relay_gains[j];
  return trace_product(f * rx, adjoint(f)).real();
}

inline double source_interference(const RelayNetwork& net, const TransceiverState& state,
                                  std::size_t i) {
  double used = 0.0;
  for (std::size_t m = 0; m < net.num_destinations(); ++m) {
    if (net.streams(i, m) > 0) continue;
    const CMatrix w = detail::pre_chain(net, state, m, i);
    for (std::size_t k = 0; k < net.num_destinations(); ++k) {
      if (net.streams(i, k) == 0) continue;
      const CMatrix t = w * state.precoders[i][k];
      used += trace_product(t * net.sources[i].signal_cov[k], adjoint(t)).real();
    }
  }
  return used;
}

// Smallest relative margin over every active power/interference budget.
inline double min_power_margin(const RelayNetwork& net, const TransceiverState& state) {
  double margin = 1.0;
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    const double p = net.sources[i].power;
    margin = std::min(margin, (p - source_power_used(net, state, i)) / std::max(1.0, p));
    if (net.sources[i].interference_cap > 0.0) {
      const double cap = net.sources[i].interference_cap;
      margin = std::min(margin, (cap - source_interference(net, state, i)) / std::max(1.0, cap));
    }
  }
  for (std::size_t j = 0; j < net.num_relays(); ++j) {
    if (net.relays[j].fixed_identity) continue;
    const double p = net.relays[j].power;
    margin = std::min(margin, (p - relay_power_used(net, state, j)) / std::max(1.0, p));
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Per-block QM subproblems.

// Unconstrained problem in X = G_k^H whose value is exactly MSE_k.
inline QMPProblem qm_for_equalizer(const RelayNetwork& net, const TransceiverState& state,
                                   std::size_t k) {
  const std::size_t d = net.dest_streams(k);
  QMPProblem p;
  p.n = net.destinations[k].antennas;
  p.r = d;
  p.objective = QMFunction::type2(received_covariance(net, state, k),
                                  -1.0 * received_cross_covariance(net, state, k),
                                  desired_signal_energy(net, k));
  return p;
}

struct RelayBlock {
  std::size_t relay = 0;
  QMPProblem original;          // variable F_j, common right factor R_x_j
  WhitenedProblem whitened;     // variable F_j R_x_j^{1/2}, type-2
  CMatrix gain_from(const CMatrix& xt) const { return whitened.to_original(xt); }
  CMatrix whitened_gain(const CMatrix& f) const { return whitened.to_whitened(f); }
};

// Total MSE as a QM function of relay j's gain matrix. The quadratic part is
// sum_k H_rd[j][k]^H G_k^H G_k H_rd[j][k] against the right factor R_x_j; the
// linear part collects the cross terms against every frozen block; the
// constant is the total MSE with F_j removed.
inline RelayBlock qm_for_relay(const RelayNetwork& net, const TransceiverState& state,
                               std::size_t j) {
  const std::size_t ntx = net.relays[j].tx_antennas;
  const std::size_t mrx = net.relays[j].rx_antennas;

  const CMatrix rx = relay_input_covariance(net, state, j);
  if (!is_positive_definite(rx))
    throw NotPsdError("qm_for_relay: relay input covariance is singular");

  CMatrix a_quad(ntx, ntx);
  for (std::size_t k = 0; k < net.num_destinations(); ++k) {
    if (net.dest_streams(k) == 0) continue;
    const CMatrix gh = state.equalizers[k] * net.h_rd[j][k];
    a_quad += adjoint(gh) * gh;
  }
  a_quad = hermitian_part(a_quad);

  // Cross-covariances with the other relays' inputs (signal part only; the
  // relay noises are mutually independent).
  std::vector<CMatrix> k_cross(net.num_relays());
  for (std::size_t j2 = 0; j2 < net.num_relays(); ++j2) {
    if (j2 == j) continue;
    CMatrix kj(mrx, net.relays[j2].rx_antennas);
    for (std::size_t i = 0; i < net.num_sources(); ++i)
      for (std::size_t m = 0; m < net.num_destinations(); ++m) {
        if (net.streams(i, m) == 0) continue;
        const CMatrix a = net.h_sr[i][j] * state.precoders[i][m];
        const CMatrix b = net.h_sr[i][j2] * state.precoders[i][m];
        kj += a * net.sources[i].signal_cov[m] * adjoint(b);
      }
    k_cross[j2] = std::move(kj);
  }

  CMatrix nlin(mrx, ntx);
  for (std::size_t k = 0; k < net.num_destinations(); ++k) {
    if (net.dest_streams(k) == 0) continue;
    const CMatrix& g = state.equalizers[k];
    CMatrix y(mrx, net.dest_streams(k));
    for (std::size_t j2 = 0; j2 < net.num_relays(); ++j2) {
      if (j2 == j) continue;
      y += k_cross[j2] * adjoint(g * net.h_rd[j2][k] * state.relay_gains[j2]);
    }
    // E{x_j s_k^H}: one column block per desired source.
    for (const auto& entry : detail::stack_layout(net, k)) {
      const CMatrix block = net.h_sr[entry.source][j] * state.precoders[entry.source][k] *
                            net.sources[entry.source].signal_cov[k];
      for (std::size_t r = 0; r < mrx; ++r)
        for (std::size_t cI = 0; cI < entry.width; ++cI)
          y(r, entry.offset + cI) -= block(r, cI);
    }
    nlin += y * (g * net.h_rd[j][k]);
  }

  TransceiverState zeroed = state;
  zeroed.relay_gains[j] = CMatrix(ntx, mrx);
  const double constant = total_mse(net, zeroed);

  RelayBlock block;
  block.relay = j;
  block.original.n = ntx;
  block.original.r = mrx;
  block.original.objective = QMFunction::make(a_quad, adjoint(nlin), constant, rx);
  block.original.inequalities.push_back(
      QMFunction::make(CMatrix::identity(ntx), CMatrix(ntx, mrx), -net.relays[j].power, rx));
  block.whitened = whiten(block.original, rx);
  return block;
}

struct SourceBlock {
  std::size_t source = 0;
  QMPProblem problem;  // type-2 in the stacked whitened variable
  std::vector<detail::StackEntry> columns;  // per-destination column ranges
  std::vector<std::size_t> dests;           // destination index per column block
  std::vector<CMatrix> r_half;              // restricted R^{1/2} factor per block
  std::vector<CMatrix> r_half_pinv;         // sqrt(l)^{-1} V^H per block

  CMatrix stack(const TransceiverState& state) const {
    std::size_t total = 0;
    for (const auto& e : columns) total += e.width;
    CMatrix xt(r_half.empty() ? 0 : state.precoders[source][dests.front()].rows(), total);
    for (std::size_t bI = 0; bI < columns.size(); ++bI) {
      const CMatrix piece = state.precoders[source][dests[bI]] * r_half[bI];
      for (std::size_t r = 0; r < piece.rows(); ++r)
        for (std::size_t c = 0; c < piece.cols(); ++c)
          xt(r, columns[bI].offset + c) = piece(r, c);
    }
    return xt;
  }

  void unstack(const CMatrix& xt, TransceiverState& state) const {
    for (std::size_t bI = 0; bI < columns.size(); ++bI) {
      const std::size_t k = dests[bI];
      CMatrix piece(xt.rows(), columns[bI].width);
      for (std::size_t r = 0; r < xt.rows(); ++r)
        for (std::size_t c = 0; c < columns[bI].width; ++c)
          piece(r, c) = xt(r, columns[bI].offset + c);
      state.precoders[source][k] = piece * r_half_pinv[bI];
    }
  }
};

// Total MSE as a QM function of source i's stacked whitened precoders
// X = [P_ik R_ik^{1/2}]_k, with the power budget as a single trace cap and an
// optional interference cap as a second quadratic constraint.
//
// With couple_relay_power set, the subproblem also keeps every relay inside
// its transmit budget: relay power is itself an exact quadratic in X, and
// carrying these caps means a source update can never strand a relay outside
// its own constraint, which keeps the whole sweep monotone.
inline SourceBlock qm_for_source(const RelayNetwork& net, const TransceiverState& state,
                                 std::size_t i, bool couple_relay_power = false) {
  const std::size_t na = net.sources[i].antennas;

  SourceBlock block;
  block.source = i;

  // Whitening factors per served destination, restricted to the positive
  // eigenspace of the signal covariance (rank-deficient covariances shrink
  // the block width).
  std::size_t total = 0;
  for (std::size_t k = 0; k < net.num_destinations(); ++k) {
    const std::size_t lk = net.streams(i, k);
    if (lk == 0) continue;
    HermitianEig eig = hermitian_eig(net.sources[i].signal_cov[k]);
    const double cut = 1e-12 * std::max(1.0, eig.eigenvalues.front());
    std::size_t rank = 0;
    while (rank < eig.eigenvalues.size() && eig.eigenvalues[rank] > cut) ++rank;
    if (rank == 0) continue;
    CMatrix half(lk, rank), half_pinv(rank, lk);
    for (std::size_t c = 0; c < rank; ++c) {
      const double s = std::sqrt(eig.eigenvalues[c]);
      for (std::size_t r = 0; r < lk; ++r) {
        half(r, c) = eig.eigenvectors(r, c) * s;
        half_pinv(c, r) = conj_of(eig.eigenvectors(r, c)) / s;
      }
    }
    block.columns.push_back({i, total, rank});
    block.dests.push_back(k);
    block.r_half.push_back(std::move(half));
    block.r_half_pinv.push_back(std::move(half_pinv));
    total += rank;
  }

  // Quadratic coefficient: the physical chain is destination-independent.
  CMatrix a_quad(na, na);
  CMatrix a_cap(na, na);
  std::vector<CMatrix> chains(net.num_destinations());
  for (std::size_t m = 0; m < net.num_destinations(); ++m) {
    chains[m] = detail::pre_chain(net, state, m, i);
    if (net.dest_streams(m) > 0) {
      const CMatrix v = state.equalizers[m] * chains[m];
      a_quad += adjoint(v) * v;
    }
    if (net.streams(i, m) == 0) a_cap += adjoint(chains[m]) * chains[m];
  }
  a_quad = hermitian_part(a_quad);
  a_cap = hermitian_part(a_cap);

  CMatrix b(na, total);
  for (std::size_t bI = 0; bI < block.columns.size(); ++bI) {
    const std::size_t k = block.dests[bI];
    // Row block of G_k matching this source in the desired stack.
    std::size_t row_off = 0;
    for (const auto& e : detail::stack_layout(net, k)) {
      if (e.source == i) {
        row_off = e.offset;
        break;
      }
    }
    const std::size_t lk = net.streams(i, k);
    CMatrix gblock(lk, net.destinations[k].antennas);
    for (std::size_t r = 0; r < lk; ++r)
      for (std::size_t c = 0; c < gblock.cols(); ++c)
        gblock(r, c) = state.equalizers[k](row_off + r, c);
    const CMatrix piece = -1.0 * (adjoint(chains[k]) * adjoint(gblock) * block.r_half[bI]);
    for (std::size_t r = 0; r < na; ++r)
      for (std::size_t c = 0; c < block.columns[bI].width; ++c)
        b(r, block.columns[bI].offset + c) = piece(r, c);
  }

  TransceiverState zeroed = state;
  for (std::size_t k = 0; k < net.num_destinations(); ++k)
    if (net.streams(i, k) > 0)
      zeroed.precoders[i][k] = CMatrix(na, net.streams(i, k));
  const double constant = total_mse(net, zeroed);

  block.problem.n = na;
  block.problem.r = total;
  block.problem.objective = QMFunction::type2(a_quad, b, constant);
  block.problem.inequalities.push_back(
      QMFunction::type2(CMatrix::identity(na), CMatrix(na, total), -net.sources[i].power));
  if (net.sources[i].interference_cap > 0.0)
    block.problem.inequalities.push_back(QMFunction::type2(
        a_cap, CMatrix(na, total), -net.sources[i].interference_cap));
  if (couple_relay_power) {
    for (std::size_t j = 0; j < net.num_relays(); ++j) {
      if (net.relays[j].fixed_identity) continue;
      const CMatrix fh = state.relay_gains[j] * net.h_sr[i][j];
      const CMatrix a_relay = hermitian_part(adjoint(fh) * fh);
      const double other = relay_power_used(net, zeroed, j);
      block.problem.inequalities.push_back(QMFunction::type2(
          a_relay, CMatrix(na, total), other - net.relays[j].power));
    }
  }
  return block;
}

// ---------------------------------------------------------------------------
// Block-coordinate descent.

struct BcdOptions {
  double tol = 1e-8;
  double accept_slack = 1e-12;     // numerical slack for the descent guard
  bool couple_relay_power = true;  // source updates preserve relay budgets
  bool power_rebalance = true;     // joint source/relay scaling block
};

namespace detail {

struct UpdateOutcome {
  bool accepted = false;
  double mse = 0.0;
};

inline UpdateOutcome try_update(const RelayNetwork& net, TransceiverState& state,
                                const TransceiverState& candidate, double before,
                                bool incumbent_feasible, const BcdOptions& opt) {
  const double after = total_mse(net, candidate);
  if (!incumbent_feasible || after <= before + opt.accept_slack) {
    state = candidate;
    return {true, after};
  }
  return {false, before};
}

inline TransceiverState scaled_state(const RelayNetwork& net, const TransceiverState& base,
                                     double sp, double sf) {
  TransceiverState st = base;
  for (auto& row : st.precoders)
    for (auto& p : row) p *= sp;
  for (std::size_t j = 0; j < net.num_relays(); ++j)
    if (!net.relays[j].fixed_identity) st.relay_gains[j] *= sf;
  return st;
}

// Joint rescaling of all precoders (common factor sp) and all free relay
// gains (common factor sf). Along this 2-plane the exact MSE is
//   A (sp sf)^2 - 2 B (sp sf) + C sf^2 + D
// (signal chains scale with sp*sf, forwarded relay noise with sf), so four
// analytic MSE evaluations pin the polynomial and the subproblem solves to
// machine precision. This block is what lets the power split keep moving when
// the per-block updates preserve each other's budgets: a saturated relay
// would otherwise freeze the sources at their current power.
inline std::optional<std::pair<double, TransceiverState>> rebalance_powers(
    const RelayNetwork& net, const TransceiverState& state) {
  bool any_free = false, any_fixed = false;
  for (const auto& rel : net.relays) (rel.fixed_identity ? any_fixed : any_free) = true;
  if (any_free && any_fixed) return std::nullopt;  // mixed stages: scaling skipped

  // Source-power cap on sp (interference caps are handled below: with free
  // relays interference scales with sp*sf, without them with sp).
  double sp_max = 1e6;
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    const double used = source_power_used(net, state, i);
    if (used > 1e-300) sp_max = std::min(sp_max, std::sqrt(net.sources[i].power / used));
  }
  double u_max = 1e6;  // cap on sp (no free relays) or sp*sf (free relays)
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    if (net.sources[i].interference_cap <= 0.0) continue;
    const double intf = source_interference(net, state, i);
    if (intf > 1e-300)
      u_max = std::min(u_max, std::sqrt(net.sources[i].interference_cap / intf));
  }

  if (!any_free) {
    // Pass-through network: MSE = A sp^2 - 2 B sp + D on sp in [0, cap].
    const double d0 = total_mse(net, scaled_state(net, state, 0.0, 1.0));
    const double m1 = total_mse(net, state);
    const double m2 = total_mse(net, scaled_state(net, state, 2.0, 1.0));
    const double bcoef = (4.0 * (m1 - d0) - (m2 - d0)) / 4.0;
    const double acoef = (m1 - d0) + 2.0 * bcoef;
    const double cap = std::min(sp_max, u_max);
    double sp = (acoef > 1e-300) ? std::clamp(bcoef / acoef, 0.0, cap)
                                 : (bcoef > 0.0 ? cap : 0.0);
    TransceiverState cand = scaled_state(net, state, sp, 1.0);
    return std::make_pair(total_mse(net, cand), std::move(cand));
  }

  // Relay power under scaling: s_f^2 (sp^2 a_j + b_j) <= P_j with
  // a_j, b_j the signal and noise parts of the forwarded power.
  std::vector<double> asig, bnoise, budget;
  {
    TransceiverState zerop = scaled_state(net, state, 0.0, 1.0);
    for (std::size_t j = 0; j < net.num_relays(); ++j) {
      if (net.relays[j].fixed_identity) continue;
      const double noise_part = relay_power_used(net, zerop, j);
      const double full = relay_power_used(net, state, j);
      asig.push_back(std::max(full - noise_part, 0.0));
      bnoise.push_back(noise_part);
      budget.push_back(net.relays[j].power);
    }
  }

  const double d0 = total_mse(net, scaled_state(net, state, 0.0, 0.0));
  const double ccoef = total_mse(net, scaled_state(net, state, 0.0, 1.0)) - d0;
  const double m11 = total_mse(net, state) - ccoef - d0;
  const double m21 = total_mse(net, scaled_state(net, state, 2.0, 1.0)) - ccoef - d0;
  const double bcoef = (m21 - 4.0 * m11) / 4.0;
  const double acoef = m11 + 2.0 * bcoef;

  auto poly = [&](double sp, double sf) {
    const double u = sp * sf;
    return acoef * u * u - 2.0 * bcoef * u + ccoef * sf * sf + d0;
  };
  auto sf_bound = [&](double sp) {
    double hi = 1e6;
    for (std::size_t j = 0; j < asig.size(); ++j) {
      const double denom = sp * sp * asig[j] + bnoise[j];
      if (denom > 1e-300) hi = std::min(hi, std::sqrt(budget[j] / denom));
    }
    return hi;
  };
  auto best_sf = [&](double sp) {
    double hi = sf_bound(sp);
    if (sp > 1e-300) hi = std::min(hi, u_max / sp);
    const double quad = acoef * sp * sp + ccoef;
    double sf = (quad > 1e-300) ? std::clamp(bcoef * sp / quad, 0.0, hi)
                                : (bcoef * sp > 0.0 ? hi : 0.0);
    return sf;
  };

  double best_sp = 1.0, best_val = poly(1.0, best_sf(1.0));
  {
    double lo = 0.0, hi = sp_max;
    for (int level = 0; level < 8; ++level) {
      const int steps = 96;
      double local_best = best_sp, local_val = best_val;
      for (int a = 0; a <= steps; ++a) {
        const double sp = lo + (hi - lo) * a / steps;
        const double v = poly(sp, best_sf(sp));
        if (v < local_val) {
          local_val = v;
          local_best = sp;
        }
      }
      best_sp = local_best;
      best_val = local_val;
      const double width = (hi - lo) / steps;
      lo = std::max(0.0, best_sp - 2.0 * width);
      hi = std::min(sp_max, best_sp + 2.0 * width);
    }
  }
  TransceiverState cand = scaled_state(net, state, best_sp, best_sf(best_sp));
  return std::make_pair(total_mse(net, cand), std::move(cand));
}

}  // namespace detail

// One sweep: all equalizers (closed form), all relays (bisection path), all
// sources (bisection, or the homogenized path when an interference cap adds a
// second constraint). Each accepted update is the global optimum of its block
// subproblem, so the recorded MSE never increases while the incumbent block
// is feasible; an infeasible incumbent (stale after other blocks moved) is
// always replaced by the feasible optimum.
inline std::vector<TraceRecord> bcd_sweep(const RelayNetwork& net, TransceiverState& state,
                                          std::size_t sweep_index = 0,
                                          const BcdOptions& opt = {}) {
  std::vector<TraceRecord> records;
  SolveSettings settings;
  settings.tol = opt.tol;

  auto record = [&](const std::string& block, double mse) {
    records.push_back({sweep_index, block, mse, min_power_margin(net, state)});
  };

  for (std::size_t k = 0; k < net.num_destinations(); ++k) {
    if (net.dest_streams(k) == 0) continue;
    const double before = total_mse(net, state);
    QMPProblem p = qm_for_equalizer(net, state, k);
    QMPSolution sol = solve(p, settings);
    TransceiverState candidate = state;
    candidate.equalizers[k] = adjoint(sol.x);
    auto outcome = detail::try_update(net, state, candidate, before, true, opt);
    record("G[" + std::to_string(k) + "]", outcome.mse);
  }

  for (std::size_t j = 0; j < net.num_relays(); ++j) {
    if (net.relays[j].fixed_identity) continue;
    const double before = total_mse(net, state);
    RelayBlock block = qm_for_relay(net, state, j);
    QMPSolution sol = solve(block.whitened.problem, settings);
    TransceiverState candidate = state;
    candidate.relay_gains[j] = block.gain_from(sol.x);
    const bool incumbent_ok =
        relay_power_used(net, state, j) <= net.relays[j].power * (1.0 + 1e-9) + 1e-12;
    auto outcome = detail::try_update(net, state, candidate, before, incumbent_ok, opt);
    record("F[" + std::to_string(j) + "]", outcome.mse);
  }

  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    SourceBlock block = qm_for_source(net, state, i, opt.couple_relay_power);
    if (block.columns.empty()) continue;
    const double before = total_mse(net, state);
    QMPSolution sol = solve(block.problem, settings);
    TransceiverState candidate = state;
    block.unstack(sol.x, candidate);
    // Own power never drifts, but an interference cap can go stale after the
    // relays moved.
    bool incumbent_ok =
        source_power_used(net, state, i) <= net.sources[i].power * (1.0 + 1e-9) + 1e-12;
    if (net.sources[i].interference_cap > 0.0)
      incumbent_ok = incumbent_ok &&
                     source_interference(net, state, i) <=
                         net.sources[i].interference_cap * (1.0 + 1e-9) + 1e-12;
    auto outcome = detail::try_update(net, state, candidate, before, incumbent_ok, opt);
    record("P[" + std::to_string(i) + "]", outcome.mse);
  }

  if (opt.power_rebalance) {
    const double before = total_mse(net, state);
    if (auto rebalanced = detail::rebalance_powers(net, state)) {
      auto outcome = detail::try_update(net, state, rebalanced->second, before, true, opt);
      record("S", outcome.mse);
    }
  }

  return records;
}

// ---------------------------------------------------------------------------
// Initialization and the outer loop.

struct InitPolicy {
  enum class Kind { HalfPowerIdentity, SeededRandom };
  Kind kind = Kind::HalfPowerIdentity;
  std::uint64_t seed = 1;

  static InitPolicy half_power() { return {}; }
  static InitPolicy seeded(std::uint64_t s) { return {Kind::SeededRandom, s}; }
};

struct StopRule {
  std::size_t max_sweeps = 500;
  double rel_tol = 1e-8;
};

inline TransceiverState initial_state(const RelayNetwork& net,
                                      const InitPolicy& policy = {}) {
  Rng rng(policy.seed);
  TransceiverState state;
  state.precoders.resize(net.num_sources());
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    state.precoders[i].resize(net.num_destinations());
    std::vector<CMatrix> shapes(net.num_destinations());
    double used = 0.0;
    for (std::size_t k = 0; k < net.num_destinations(); ++k) {
      const std::size_t lk = net.streams(i, k);
      if (lk == 0) {
        state.precoders[i][k] = CMatrix(net.sources[i].antennas, 0);
        continue;
      }
      CMatrix p = (policy.kind == InitPolicy::Kind::HalfPowerIdentity)
                      ? CMatrix::eye(net.sources[i].antennas, lk)
                      : rng.gaussian(net.sources[i].antennas, lk);
      shapes[k] = p;
      used += trace_product(p * net.sources[i].signal_cov[k], adjoint(p)).real();
    }
    const double beta = (used > 0.0) ? std::sqrt(0.5 * net.sources[i].power / used) : 0.0;
    for (std::size_t k = 0; k < net.num_destinations(); ++k)
      if (net.streams(i, k) > 0) state.precoders[i][k] = beta * shapes[k];
  }

  state.relay_gains.resize(net.num_relays());
  for (std::size_t j = 0; j < net.num_relays(); ++j) {
    const auto& rel = net.relays[j];
    if (rel.fixed_identity) {
      state.relay_gains[j] = CMatrix::eye(rel.tx_antennas, rel.rx_antennas);
      continue;
    }
    CMatrix f = (policy.kind == InitPolicy::Kind::HalfPowerIdentity)
                    ? CMatrix::eye(rel.tx_antennas, rel.rx_antennas)
                    : rng.gaussian(rel.tx_antennas, rel.rx_antennas);
    state.relay_gains[j] = f;
    const double used = relay_power_used(net, state, j);
    state.relay_gains[j] = (used > 0.0) ? std::sqrt(0.5 * rel.power / used) * f
                                        : CMatrix(rel.tx_antennas, rel.rx_antennas);
  }

  state.equalizers.resize(net.num_destinations());
  for (std::size_t k = 0; k < net.num_destinations(); ++k)
    state.equalizers[k] = CMatrix(net.dest_streams(k), net.destinations[k].antennas);
  return state;
}

inline std::pair<TransceiverState, ConvergenceTrace> run_design(
    const RelayNetwork& net, const InitPolicy& init = {}, const StopRule& stop = {},
    const BcdOptions& opt = {}) {
  const auto problems = validate_network(net);
  if (!problems.empty()) throw ValidationError("run_design: " + problems.front());

  TransceiverState state = initial_state(net, init);
  ConvergenceTrace trace;
  double prev = total_mse(net, state);
  for (std::size_t sweep = 0; sweep < stop.max_sweeps; ++sweep) {
    auto records = bcd_sweep(net, state, sweep, opt);
    trace.records.insert(trace.records.end(), records.begin(), records.end());
    trace.sweeps = sweep + 1;
    const double cur = records.empty() ? prev : records.back().mse;
    if (std::abs(prev - cur) < stop.rel_tol * std::max(prev, 1e-300)) {
      prev = cur;
      break;
    }
    prev = cur;
  }
  trace.final_mse = prev;
  return {std::move(state), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Scenario generation.

enum class ScenarioPreset { Relay, Uplink, Downlink, Multicell };

inline ScenarioPreset preset_from_string(const std::string& s) {
  if (s == "relay" || s == "RELAY") return ScenarioPreset::Relay;
  if (s == "uplink" || s == "UPLINK") return ScenarioPreset::Uplink;
  if (s == "downlink" || s == "DOWNLINK") return ScenarioPreset::Downlink;
  if (s == "multicell" || s == "MULTICELL") return ScenarioPreset::Multicell;
  throw std::invalid_argument("unknown scenario preset: " + s);
}

struct ScenarioDims {
  std::size_t sources = 2;
  std::size_t relays = 2;
  std::size_t destinations = 2;
  std::size_t antennas = 2;
  std::size_t streams = 1;
  double source_power = 10.0;
  double relay_power = 10.0;
  double noise1 = 0.1;
  double noise2 = 0.1;
  double interference_cap = 0.0;  // multicell only; 0 = disabled
};

inline RelayNetwork generate_network(ScenarioPreset preset, const ScenarioDims& dims,
                                     std::uint64_t seed) {
  if (dims.antennas == 0 || dims.streams == 0)
    throw std::invalid_argument("generate_network: dims must be positive");
  Rng rng(seed);
  RelayNetwork net;
  const double eps = 1e-12;  // PD floor for synthetic pass-through noise

  auto gaussian_channel = [&](std::size_t rows, std::size_t cols) {
    return rng.gaussian(rows, cols);
  };

  switch (preset) {
    case ScenarioPreset::Relay: {
      for (std::size_t i = 0; i < dims.sources; ++i) {
        SourceNode s;
        s.antennas = dims.antennas;
        s.power = dims.source_power;
        s.signal_cov.assign(dims.destinations, CMatrix::identity(dims.streams));
        net.sources.push_back(std::move(s));
      }
      for (std::size_t j = 0; j < dims.relays; ++j)
        net.relays.push_back({dims.antennas, dims.antennas, dims.relay_power,
                              dims.noise1 * CMatrix::identity(dims.antennas), false});
      for (std::size_t k = 0; k < dims.destinations; ++k)
        net.destinations.push_back(
            {dims.antennas, dims.noise2 * CMatrix::identity(dims.antennas)});
      break;
    }
    case ScenarioPreset::Uplink: {
      // Sources straight into one destination: the "relay" is a fixed
      // identity pass-through carrying the receiver noise.
      for (std::size_t i = 0; i < dims.sources; ++i) {
        SourceNode s;
        s.antennas = dims.antennas;
        s.power = dims.source_power;
        s.signal_cov.assign(1, CMatrix::identity(dims.streams));
        net.sources.push_back(std::move(s));
      }
      net.relays.push_back({dims.antennas, dims.antennas, 1.0,
                            dims.noise2 * CMatrix::identity(dims.antennas), true});
      net.destinations.push_back({dims.antennas, eps * CMatrix::identity(dims.antennas)});
      break;
    }
    case ScenarioPreset::Downlink: {
      SourceNode s;
      s.antennas = dims.antennas;
      s.power = dims.source_power;
      s.signal_cov.assign(dims.destinations, CMatrix::identity(dims.streams));
      net.sources.push_back(std::move(s));
      net.relays.push_back({dims.antennas, dims.antennas, 1.0,
                            eps * CMatrix::identity(dims.antennas), true});
      for (std::size_t k = 0; k < dims.destinations; ++k)
        net.destinations.push_back(
            {dims.antennas, dims.noise2 * CMatrix::identity(dims.antennas)});
      break;
    }
    case ScenarioPreset::Multicell: {
      const std::size_t cells = dims.sources;
      for (std::size_t i = 0; i < cells; ++i) {
        SourceNode s;
        s.antennas = dims.antennas;
        s.power = dims.source_power;
        s.signal_cov.assign(cells, CMatrix());
        s.signal_cov[i] = CMatrix::identity(dims.streams);
        s.interference_cap = dims.interference_cap;
        net.sources.push_back(std::move(s));
      }
      for (std::size_t j = 0; j < cells; ++j)
        net.relays.push_back({dims.antennas, dims.antennas, dims.relay_power,
                              dims.noise1 * CMatrix::identity(dims.antennas), false});
      for (std::size_t k = 0; k < cells; ++k)
        net.destinations.push_back(
            {dims.antennas, dims.noise2 * CMatrix::identity(dims.antennas)});
      break;
    }
  }

  net.h_sr.resize(net.num_sources());
  for (std::size_t i = 0; i < net.num_sources(); ++i) {
    net.h_sr[i].resize(net.num_relays());
    for (std::size_t j = 0; j < net.num_relays(); ++j) {
      if (preset == ScenarioPreset::Downlink) {
        net.h_sr[i][j] = CMatrix::identity(dims.antennas);
      } else {
        net.h_sr[i][j] =
            gaussian_channel(net.relays[j].rx_antennas, net.sources[i].antennas);
      }
    }
  }
  net.h_rd.resize(net.num_relays());
  for (std::size_t j = 0; j < net.num_relays(); ++j) {
    net.h_rd[j].resize(net.num_destinations());
    for (std::size_t k = 0; k < net.num_destinations(); ++k) {
      if (preset == ScenarioPreset::Uplink) {
        net.h_rd[j][k] = CMatrix::identity(dims.antennas);
      } else if (preset == ScenarioPreset::Multicell && j != k) {
        net.h_rd[j][k] = CMatrix(net.destinations[k].antennas, net.relays[j].tx_antennas);
      } else {
        net.h_rd[j][k] =
            gaussian_channel(net.destinations[k].antennas, net.relays[j].tx_antennas);
      }
    }
  }
  return net;
}

}  // namespace qmp
