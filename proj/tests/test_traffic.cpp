#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "hosfl/protocol.hpp"
#include "hosfl/traffic.hpp"

using namespace hosfl;

namespace {
std::uint64_t at(const ByteCounts& c, MessageKind k) { return c[static_cast<std::size_t>(k)]; }

HyperParams hp_with(std::size_t K, std::size_t P, std::size_t B) {
  HyperParams hp;
  hp.clients = hp.sampled = K;
  hp.zo.perturbations = P;
  hp.batch_size = B;
  return hp;
}

SplitModelConfig model_with_client_width(std::size_t width) {
  SplitModelConfig m;
  m.layer_dims = {width, 4, 2};
  m.loss = LossKind::softmax_cross_entropy;
  return m;
}
}  // namespace

TEST(TrafficLedger, RecordZeroLeavesTotals) {
  TrafficLedger l;
  l.record(MessageKind::ScalarUp, 0);
  EXPECT_EQ(l.grand_total(), 0u);
}

TEST(TrafficLedger, RecordsAccumulate) {
  TrafficLedger l;
  l.record(MessageKind::ScalarUp, 5);
  l.record(MessageKind::ScalarUp, 5);
  EXPECT_EQ(l.total(MessageKind::ScalarUp), 10u);
}

TEST(TrafficLedger, KindsAreIndependent) {
  TrafficLedger l;
  l.record(MessageKind::ScalarUp, 5);
  l.record(MessageKind::GradDown, 7);
  l.record(MessageKind::ScalarUp, 1);
  EXPECT_EQ(l.total(MessageKind::ScalarUp), 6u);
  EXPECT_EQ(l.total(MessageKind::GradDown), 7u);
  EXPECT_EQ(l.grand_total(), 13u);
}

TEST(TrafficLedger, SnapshotsAreMonotone) {
  TrafficLedger l;
  l.record(MessageKind::LabelUp, 3);
  l.close_round();
  l.record(MessageKind::LabelUp, 4);
  l.close_round();
  ASSERT_EQ(l.per_round().size(), 2u);
  EXPECT_EQ(at(l.per_round()[0], MessageKind::LabelUp), 3u);
  EXPECT_EQ(at(l.per_round()[1], MessageKind::LabelUp), 7u);
}

TEST(ClosedForm, ScalarUpIndependentOfClientDim) {
  const HyperParams hp = hp_with(10, 5, 8);
  const auto small = closed_form_traffic(hp, model_with_client_width(2), Protocol::hosfl);
  const auto large = closed_form_traffic(hp, model_with_client_width(500), Protocol::hosfl);
  EXPECT_EQ(at(small, MessageKind::ScalarUp), 400u);
  EXPECT_EQ(at(large, MessageKind::ScalarUp), 400u);
}

TEST(ClosedForm, SflModelUpForMillionParameterClient) {
  TrafficShape s;
  s.sampled_clients = 10;
  s.client_dim = 1000000;
  EXPECT_EQ(at(closed_form_traffic(s, Protocol::sfl), MessageKind::ModelUp), 80000000u);
}

TEST(ClosedForm, HoSflSendsNoModels) {
  for (std::size_t w : {1u, 7u, 300u}) {
    const auto c = closed_form_traffic(hp_with(3, 4, 5), model_with_client_width(w), Protocol::hosfl);
    EXPECT_EQ(at(c, MessageKind::ModelUp), 0u);
    EXPECT_EQ(at(c, MessageKind::ModelDown), 0u);
  }
}

TEST(ClosedForm, PerProtocolStructure) {
  TrafficShape s{3, 16, 6, 100, 5, kBytesPerClassLabel};
  const auto ho = closed_form_traffic(s, Protocol::hosfl);
  const auto sfl = closed_form_traffic(s, Protocol::sfl);
  const auto zo = closed_form_traffic(s, Protocol::zosfl);
  EXPECT_EQ(at(ho, MessageKind::ActivationUp), 3u * 16 * 6 * 8);
  EXPECT_EQ(at(ho, MessageKind::GradDown), 3u * 16 * 6 * 8);
  EXPECT_EQ(at(ho, MessageKind::LabelUp), 3u * 16 * 4);
  EXPECT_EQ(at(ho, MessageKind::ScalarDown), 5u * 8);
  EXPECT_EQ(at(ho, MessageKind::SeedDown), 5u * 8);
  EXPECT_EQ(at(sfl, MessageKind::ScalarUp), 0u);
  EXPECT_EQ(at(sfl, MessageKind::ModelDown), 3u * 100 * 8);
  EXPECT_EQ(at(zo, MessageKind::ActivationUp), 2 * at(sfl, MessageKind::ActivationUp));
  EXPECT_EQ(at(zo, MessageKind::GradDown), 0u);
  EXPECT_EQ(at(zo, MessageKind::ScalarUp), 0u);
}

TEST(ClosedForm, RegressionLabelsAreFloats) {
  SplitModelConfig m;
  m.layer_dims = {3, 2, 4};
  const auto c = closed_form_traffic(hp_with(2, 1, 5), m, Protocol::sfl);
  EXPECT_EQ(at(c, MessageKind::LabelUp), 2u * 5 * 4 * 8);
}

TEST(Breakdown, EmptyLedgerAllZero) {
  const auto rows = breakdown_report(TrafficLedger{});
  ASSERT_EQ(rows.size(), kMessageKindCount);
  for (const auto& r : rows) {
    EXPECT_EQ(r.bytes, 0u);
    EXPECT_EQ(r.share, 0.0);
  }
}

TEST(Breakdown, SharesSumToOne) {
  TrafficLedger l;
  l.record(MessageKind::ActivationUp, 12345);
  l.record(MessageKind::ScalarUp, 7);
  l.record(MessageKind::SeedDown, 999);
  const auto rows = breakdown_report(l);
  double s = 0.0;
  for (const auto& r : rows) s += r.share;
  EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST(Breakdown, CsvLayout) {
  TrafficLedger l;
  l.record(MessageKind::GradDown, 4);
  const std::string csv = breakdown_csv(breakdown_report(l));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kind,direction,bytes,share");
  EXPECT_NE(csv.find("GradDown,downlink,4,1.0"), std::string::npos);
  EXPECT_NE(csv.find("ScalarUp,uplink,0,0.0"), std::string::npos);
}

TEST(Breakdown, OneRoundLedgerEqualsClosedForm) {
  SplitModelConfig model = model_with_client_width(3);
  HyperParams hp = hp_with(2, 4, 6);
  auto data = std::make_shared<Dataset>(make_classification_blobs(60, 3, 2, 2.0, 1));
  Federation fed = make_federation(model, hp, data, iid_partition(60, 2, 1), 1,
                                   init_parameters(model, 2));
  step(fed, Protocol::hosfl);
  EXPECT_EQ(fed.ledger.totals(), closed_form_traffic(hp, model, Protocol::hosfl));
}

TEST(Names, RoundTrip) {
  for (Protocol p : {Protocol::hosfl, Protocol::sfl, Protocol::zosfl}) {
    EXPECT_EQ(parse_protocol(to_string(p)), p);
  }
  EXPECT_EQ(direction_of(MessageKind::ScalarUp), Direction::uplink);
  EXPECT_EQ(direction_of(MessageKind::SeedDown), Direction::downlink);
}
