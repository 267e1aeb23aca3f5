#include "fedsophia/telemetry.hpp"

#include <cmath>

#include "fedsophia/errors.hpp"

namespace fedsophia {

void ChannelConfig::validate() const {
  if (!(tx_power_w > 0.0)) throw ConfigError("channel: transmit power must be > 0");
  if (!(bandwidth_hz > 0.0)) throw ConfigError("channel: bandwidth must be > 0");
  if (!(noise_psd_w_per_hz > 0.0)) throw ConfigError("channel: noise density must be > 0");
  if (!(distance_m > 0.0)) throw ConfigError("channel: distance must be > 0");
}

double shannon_rate(const ChannelConfig& ch) {
  const double snr = ch.tx_power_w / (ch.distance_m * ch.bandwidth_hz * ch.noise_psd_w_per_hz);
  return ch.bandwidth_hz * std::log2(1.0 + snr);
}

void charge_computation(EnergyLedger& ledger, double iterations, double joules_per_iteration) {
  if (iterations < 0.0 || joules_per_iteration < 0.0) {
    throw DomainError("charge_computation: negative iterations or energy");
  }
  ledger.computation_j += iterations * joules_per_iteration;
}

void charge_transmission(EnergyLedger& ledger, std::size_t param_count,
                         const ChannelConfig& ch) {
  if (param_count == 0) throw DomainError("charge_transmission: empty model");
  const std::uint64_t bits = kBitsPerParam * param_count;
  const double seconds = static_cast<double>(bits) / shannon_rate(ch);
  ledger.transmission_j += ch.tx_power_w * seconds;
  ledger.airtime_s += seconds;
  ledger.bits_sent += bits;
  ledger.uploads += 1;
}

double carbon(const EnergyLedger& ledger, double kg_per_megajoule) {
  if (kg_per_megajoule < 0.0) throw DomainError("carbon: negative conversion factor");
  return ledger.total_j() / 1e6 * kg_per_megajoule;
}

double iteration_energy(double flops_per_sample, std::size_t batch_size,
                        double joules_per_flop) {
  return flops_per_sample * static_cast<double>(batch_size) * joules_per_flop;
}

EnergyLedger& operator+=(EnergyLedger& a, const EnergyLedger& b) {
  a.computation_j += b.computation_j;
  a.transmission_j += b.transmission_j;
  a.bits_sent += b.bits_sent;
  a.uploads += b.uploads;
  a.airtime_s += b.airtime_s;
  return a;
}

}  // namespace fedsophia
