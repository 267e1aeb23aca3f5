#pragma once

// Per-device energy accounting.
//
// Computation energy is charged per local iteration. Transmission energy is
// charged per upload of a 32-bit-per-parameter model at the Shannon rate of
// the device's channel: E = P_t * (32 d) / (B log2(1 + P_t / (dist B N0))).

#include <cstddef>
#include <cstdint>

namespace fedsophia {

inline constexpr std::size_t kBitsPerParam = 32;

struct ChannelConfig {
  double tx_power_w = 0.1;
  double bandwidth_hz = 2e6;
  double noise_psd_w_per_hz = 1e-9;
  double distance_m = 50.0;

  /// Throws ConfigError unless every field is > 0.
  void validate() const;
};

struct EnergyLedger {
  double computation_j = 0.0;
  double transmission_j = 0.0;
  std::uint64_t bits_sent = 0;
  std::uint64_t uploads = 0;
  /// Cumulative airtime of all uploads, in seconds.
  double airtime_s = 0.0;

  double total_j() const noexcept { return computation_j + transmission_j; }
};

/// Maximum achievable uplink rate in bit/s.
double shannon_rate(const ChannelConfig& ch);

void charge_computation(EnergyLedger& ledger, double iterations, double joules_per_iteration);

/// Charges one upload of a param_count-parameter model. Throws DomainError on
/// param_count == 0.
void charge_transmission(EnergyLedger& ledger, std::size_t param_count,
                         const ChannelConfig& ch);

/// Footprint in kg CO2-eq: total energy in megajoules times the factor.
double carbon(const EnergyLedger& ledger, double kg_per_megajoule);

/// Energy of one local iteration under the FLOP-count model.
double iteration_energy(double flops_per_sample, std::size_t batch_size,
                        double joules_per_flop);

EnergyLedger& operator+=(EnergyLedger& a, const EnergyLedger& b);

}  // namespace fedsophia
