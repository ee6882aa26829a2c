#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hosfl {

enum class MessageKind : std::size_t {
  ActivationUp = 0,
  LabelUp,
  GradDown,
  ModelUp,
  ModelDown,
  ScalarUp,
  ScalarDown,
  SeedDown,
};
inline constexpr std::size_t kMessageKindCount = 8;
inline constexpr std::array<MessageKind, kMessageKindCount> kAllMessageKinds = {
    MessageKind::ActivationUp, MessageKind::LabelUp,  MessageKind::GradDown,
    MessageKind::ModelUp,      MessageKind::ModelDown, MessageKind::ScalarUp,
    MessageKind::ScalarDown,   MessageKind::SeedDown};

enum class Direction { uplink, downlink };

std::string_view to_string(MessageKind k);
std::string_view to_string(Direction d);
Direction direction_of(MessageKind k);

enum class Protocol { hosfl, sfl, zosfl };
std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view s);

// Payload sizing. Framing is transport-specific and not counted.
inline constexpr std::uint64_t kBytesPerFloat = 8;
inline constexpr std::uint64_t kBytesPerSeed = 8;
inline constexpr std::uint64_t kBytesPerClassLabel = 4;

using ByteCounts = std::array<std::uint64_t, kMessageKindCount>;

/// Cumulative bytes per message kind. Broadcasts are recorded once, as server
/// egress, not once per recipient.
class TrafficLedger {
 public:
  void record(MessageKind kind, std::uint64_t bytes);
  /// Appends the current totals as the snapshot closing a round.
  void close_round();
  void merge(const TrafficLedger& delta);

  std::uint64_t total(MessageKind kind) const { return totals_[static_cast<std::size_t>(kind)]; }
  std::uint64_t grand_total() const;
  const ByteCounts& totals() const { return totals_; }
  const std::vector<ByteCounts>& per_round() const { return per_round_; }

 private:
  ByteCounts totals_{};
  std::vector<ByteCounts> per_round_;
};

/// Shape of one round, enough to price it without running it.
struct TrafficShape {
  std::size_t sampled_clients = 1;  // K
  std::size_t batch_size = 1;       // B
  std::size_t cut_width = 1;        // D
  std::size_t client_dim = 1;       // d_c
  std::size_t perturbations = 1;    // P
  std::uint64_t label_bytes_per_sample = kBytesPerClassLabel;
};

/// Bytes one round costs under `protocol` with no catch-up replay traffic.
///   hosfl: ActivationUp = GradDown = K B D 8, ScalarUp = K P 8,
///          ScalarDown = SeedDown = P 8 (broadcast), no model traffic.
///   sfl:   ActivationUp = GradDown = K B D 8, ModelUp = ModelDown = K d_c 8.
///   zosfl: ActivationUp = 2 K B D 8, no GradDown, ModelUp = ModelDown = K d_c 8,
///          ScalarDown = K 8 (one loss difference per client), SeedDown = 8.
/// LabelUp = K B label_bytes for every protocol.
ByteCounts closed_form_traffic(const TrafficShape& shape, Protocol protocol);

struct BreakdownRow {
  MessageKind kind;
  Direction direction;
  std::uint64_t bytes = 0;
  double share = 0.0;
};

/// One row per kind in enum order; shares sum to 1 (all zero for an empty ledger).
std::vector<BreakdownRow> breakdown_report(const ByteCounts& totals);
inline std::vector<BreakdownRow> breakdown_report(const TrafficLedger& ledger) {
  return breakdown_report(ledger.totals());
}

/// `kind,direction,bytes,share` with a header line.
void write_breakdown_csv(std::ostream& out, const std::vector<BreakdownRow>& rows);
std::string breakdown_csv(const std::vector<BreakdownRow>& rows);

}  // namespace hosfl
