#include "hosfl/traffic.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "hosfl/error.hpp"

namespace hosfl {

std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::ActivationUp: return "ActivationUp";
    case MessageKind::LabelUp: return "LabelUp";
    case MessageKind::GradDown: return "GradDown";
    case MessageKind::ModelUp: return "ModelUp";
    case MessageKind::ModelDown: return "ModelDown";
    case MessageKind::ScalarUp: return "ScalarUp";
    case MessageKind::ScalarDown: return "ScalarDown";
    case MessageKind::SeedDown: return "SeedDown";
  }
  return "?";
}

std::string_view to_string(Direction d) { return d == Direction::uplink ? "uplink" : "downlink"; }

Direction direction_of(MessageKind k) {
  switch (k) {
    case MessageKind::ActivationUp:
    case MessageKind::LabelUp:
    case MessageKind::ModelUp:
    case MessageKind::ScalarUp:
      return Direction::uplink;
    default:
      return Direction::downlink;
  }
}

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::hosfl: return "hosfl";
    case Protocol::sfl: return "sfl";
    case Protocol::zosfl: return "zosfl";
  }
  return "?";
}

Protocol parse_protocol(std::string_view s) {
  if (s == "hosfl") return Protocol::hosfl;
  if (s == "sfl") return Protocol::sfl;
  if (s == "zosfl") return Protocol::zosfl;
  throw ConfigError("protocol: unknown value '" + std::string(s) + "'");
}

void TrafficLedger::record(MessageKind kind, std::uint64_t bytes) {
  totals_[static_cast<std::size_t>(kind)] += bytes;
}

void TrafficLedger::close_round() { per_round_.push_back(totals_); }

void TrafficLedger::merge(const TrafficLedger& delta) {
  for (std::size_t i = 0; i < kMessageKindCount; ++i) totals_[i] += delta.totals_[i];
}

std::uint64_t TrafficLedger::grand_total() const {
  std::uint64_t sum = 0;
  for (auto b : totals_) sum += b;
  return sum;
}

ByteCounts closed_form_traffic(const TrafficShape& s, Protocol protocol) {
  ByteCounts c{};
  auto at = [&c](MessageKind k) -> std::uint64_t& { return c[static_cast<std::size_t>(k)]; };
  const std::uint64_t k = s.sampled_clients;
  const std::uint64_t activation = k * s.batch_size * s.cut_width * kBytesPerFloat;
  const std::uint64_t model = k * s.client_dim * kBytesPerFloat;
  at(MessageKind::LabelUp) = k * s.batch_size * s.label_bytes_per_sample;
  switch (protocol) {
    case Protocol::hosfl:
      at(MessageKind::ActivationUp) = activation;
      at(MessageKind::GradDown) = activation;
      at(MessageKind::ScalarUp) = k * s.perturbations * kBytesPerFloat;
      at(MessageKind::ScalarDown) = s.perturbations * kBytesPerFloat;
      at(MessageKind::SeedDown) = s.perturbations * kBytesPerSeed;
      break;
    case Protocol::sfl:
      at(MessageKind::ActivationUp) = activation;
      at(MessageKind::GradDown) = activation;
      at(MessageKind::ModelUp) = model;
      at(MessageKind::ModelDown) = model;
      break;
    case Protocol::zosfl:
      at(MessageKind::ActivationUp) = 2 * activation;
      at(MessageKind::ModelUp) = model;
      at(MessageKind::ModelDown) = model;
      at(MessageKind::ScalarDown) = k * kBytesPerFloat;
      at(MessageKind::SeedDown) = kBytesPerSeed;
      break;
  }
  return c;
}

std::vector<BreakdownRow> breakdown_report(const ByteCounts& totals) {
  std::uint64_t sum = 0;
  for (auto b : totals) sum += b;
  std::vector<BreakdownRow> rows;
  rows.reserve(kMessageKindCount);
  for (MessageKind k : kAllMessageKinds) {
    const std::uint64_t bytes = totals[static_cast<std::size_t>(k)];
    const double share = sum == 0 ? 0.0 : static_cast<double>(bytes) / static_cast<double>(sum);
    rows.push_back({k, direction_of(k), bytes, share});
  }
  return rows;
}

void write_breakdown_csv(std::ostream& out, const std::vector<BreakdownRow>& rows) {
  out << "kind,direction,bytes,share\n";
  char share[32];
  for (const auto& r : rows) {
    std::snprintf(share, sizeof share, "%.12f", r.share);
    out << to_string(r.kind) << ',' << to_string(r.direction) << ',' << r.bytes << ',' << share
        << '\n';
  }
}

std::string breakdown_csv(const std::vector<BreakdownRow>& rows) {
  std::ostringstream os;
  write_breakdown_csv(os, rows);
  return os.str();
}

}  // namespace hosfl
