#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dcdp/checkpoint.hpp"
#include "dcdp/error.hpp"
#include "dcdp/gradcheck.hpp"
#include "dcdp/model.hpp"
#include "dcdp/trainer.hpp"
#include "test_util.hpp"

using namespace dcdp;
using dcdp::testing::random_tensor;

namespace {

ModelConfig small_config(std::size_t channels = 6, std::size_t classes = 5) {
  ModelConfig cfg;
  cfg.res.blocks_per_stage = {1, 1, 1, 1};
  cfg.res.base_width = 4;
  cfg.dense.layers_per_stage = {1, 1, 1, 1};
  cfg.dense.growth_rate = 4;
  cfg.d_proj = 8;
  cfg.classes = classes;
  cfg.partition = ChannelPartition::contiguous(channels, channels / 2);
  return cfg;
}

void expect_same(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << i;
}

}  // namespace

// ---------------------------------------------------------------- partition

TEST(Partition, ContiguousHalvesShapes) {
  std::mt19937_64 rng(1);
  const auto p = ChannelPartition::make({0, 1, 2}, {3, 4, 5}, 6);
  auto [x1, x2] = partition_input(random_tensor({2, 9, 6}, rng), p);
  EXPECT_EQ(x1.shape(), (Shape{2, 9, 3}));
  EXPECT_EQ(x2.shape(), (Shape{2, 9, 3}));
}

TEST(Partition, SingleChannelSecondSet) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 4, 7}, rng);
  auto [x1, x2] = partition_input(x, ChannelPartition::make({0, 1, 2, 3, 4, 6}, {5}, 7));
  ASSERT_EQ(x2.shape(), (Shape{2, 4, 1}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(x2.at(n, t, 0), x.at(n, t, 5));
  EXPECT_EQ(x1.at(1, 3, 5), x.at(1, 3, 6));
}

TEST(Partition, ScatterInvertsPartitionForRandomSplits) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t f = 2 + rng() % 8;
    std::vector<std::size_t> first, second;
    for (std::size_t c = 0; c < f; ++c) (rng() % 2 ? first : second).push_back(c);
    if (first.empty()) first.push_back(second.back()), second.pop_back();
    if (second.empty()) second.push_back(first.back()), first.pop_back();
    const auto p = ChannelPartition::make(first, second, f);
    const Tensor x = random_tensor({3, 5, f}, rng);
    auto [a, b] = partition_input(x, p);
    EXPECT_EQ(scatter_partitions(a, b, p), x);
  }
}

TEST(Partition, ValidationErrors) {
  EXPECT_THROW(ChannelPartition::make({0, 1}, {1, 2}, 3), ContractError);
  EXPECT_THROW(ChannelPartition::make({0}, {2}, 3), ContractError);
  EXPECT_THROW(ChannelPartition::make({}, {0, 1}, 2), ContractError);
  EXPECT_THROW(ChannelPartition::make({0}, {5}, 2), ContractError);
  EXPECT_EQ(ChannelPartition::make({2, 0}, {1}, 3).first, (std::vector<std::size_t>{0, 2}));
  std::mt19937_64 rng(4);
  EXPECT_THROW(partition_input(random_tensor({1, 4, 5}, rng), ChannelPartition::contiguous(6, 3)), DimensionError);
}

TEST(Partition, FromChannelNamesSplitsAccelerometer) {
  const auto p = ChannelPartition::from_channel_names({"gyro_x", "acc_x", "acc_y", "mag_z", "Accel_z"});
  EXPECT_EQ(p.first, (std::vector<std::size_t>{1, 2, 4}));
  EXPECT_EQ(p.second, (std::vector<std::size_t>{0, 3}));
  EXPECT_THROW(ChannelPartition::from_channel_names({"gyro_x", "gyro_y"}), SchemaError);
}

// ---------------------------------------------------------------- config

TEST(ModelConfigTest, ValidationErrors) {
  ModelConfig cfg = small_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.res.blocks_per_stage = {1, 1, 1};
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.dense.layers_per_stage = {1, 0, 1, 1};
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.dense.growth_rate = 0;
  EXPECT_THROW(cfg.validate(), ContractError);
  cfg = small_config();
  cfg.dense.output_dim = 7;
  EXPECT_THROW(cfg.validate(), DimensionError);
}

// ---------------------------------------------------------------- forward

TEST(Forward, ShapeContract) {
  ModelConfig cfg = small_config(6, 5);
  cfg.d_proj = 32;
  DualPathNetwork net(cfg, 7);
  std::mt19937_64 rng(5);
  Tape tape;
  const ForwardOutputs out = net.forward(tape, random_tensor({4, 64, 6}, rng), Mode::kTrain);
  ASSERT_EQ(out.stage_projections.size(), kStageCount);
  for (const auto& [a, b] : out.stage_projections) {
    EXPECT_EQ(tape.value(a).shape(), (Shape{4, 32}));
    EXPECT_EQ(tape.value(b).shape(), (Shape{4, 32}));
  }
  EXPECT_EQ(tape.value(out.h_res).shape(), (Shape{4, cfg.d_res()}));
  EXPECT_EQ(tape.value(out.h_dense).shape(), (Shape{4, cfg.d_dense()}));
  for (Var v : {out.res_logits, out.dense_logits, out.fusion_logits}) EXPECT_EQ(tape.value(v).shape(), (Shape{4, 5}));
}

TEST(Forward, EvalModeIsDeterministic) {
  DualPathNetwork net(small_config(), 8);
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({3, 16, 6}, rng);
  Tape t1, t2;
  const ForwardOutputs a = net.forward(t1, x, Mode::kEval);
  const ForwardOutputs b = net.forward(t2, x, Mode::kEval);
  expect_same(t1.value(a.fusion_logits), t2.value(b.fusion_logits));
  expect_same(t1.value(a.stage_projections[2].second), t2.value(b.stage_projections[2].second));
}

TEST(Forward, EvalModeAcceptsSingleWindow) {
  DualPathNetwork net(small_config(), 9);
  std::mt19937_64 rng(7);
  Tape tape;
  EXPECT_NO_THROW(net.forward(tape, random_tensor({1, 16, 6}, rng), Mode::kEval));
}

TEST(Forward, TrainModeRejectsSingleWindow) {
  DualPathNetwork net(small_config(), 9);
  std::mt19937_64 rng(8);
  Tape tape;
  EXPECT_THROW(net.forward(tape, random_tensor({1, 16, 6}, rng), Mode::kTrain), DegenerateBatchError);
}

TEST(Forward, ShortWindowAndWrongChannelsRejected) {
  DualPathNetwork net(small_config(), 9);
  std::mt19937_64 rng(9);
  Tape tape;
  EXPECT_THROW(net.forward(tape, random_tensor({2, kMinWindowLength - 1, 6}, rng), Mode::kEval), DimensionError);
  EXPECT_THROW(net.forward(tape, random_tensor({2, 16, 5}, rng), Mode::kEval), DimensionError);
}

TEST(Forward, SameSeedSameInitialization) {
  DualPathNetwork a(small_config(), 42), b(small_config(), 42), c(small_config(), 43);
  ASSERT_EQ(a.parameter_count(), b.parameter_count());
  bool differs = false;
  for (std::size_t i = 0; i < a.parameter_storage().size(); ++i) {
    EXPECT_EQ(a.parameter_storage()[i].value, b.parameter_storage()[i].value);
    differs |= a.parameter_storage()[i].value != c.parameter_storage()[i].value;
  }
  EXPECT_TRUE(differs);
}

TEST(Forward, ProjectionHeadCountAndClassifierGroups) {
  DualPathNetwork net(small_config(), 1);
  EXPECT_EQ(net.parameters(ParamGroup::kProjectionHeads).size(), 2 * kStageCount * 4);
  EXPECT_EQ(net.parameters(ParamGroup::kResClassifier).size(), 2u);
  EXPECT_EQ(net.parameters(ParamGroup::kDenseClassifier).size(), 2u);
  EXPECT_EQ(net.parameters(ParamGroup::kFusionClassifier).size(), 2u);
  EXPECT_NE(net.find("fusion.classifier.weight"), nullptr);
  EXPECT_EQ(net.find("fusion.classifier.weight")->value.shape(), (Shape{5, 2 * net.config().d_res()}));
  EXPECT_EQ(net.find("no.such.param"), nullptr);
}

TEST(Forward, SinglePathBaselineUsesAllChannels) {
  ModelConfig cfg = small_config();
  cfg.dual_path = false;
  DualPathNetwork net(cfg, 3);
  EXPECT_TRUE(net.parameters(ParamGroup::kDenseBackbone).empty());
  EXPECT_EQ(net.find("res.stem.weight")->value.dim(1), 6u);
  std::mt19937_64 rng(10);
  Tape tape;
  const ForwardOutputs out = net.forward(tape, random_tensor({2, 16, 6}, rng), Mode::kEval);
  EXPECT_FALSE(out.dual_path);
  EXPECT_EQ(out.fusion_logits.index, out.res_logits.index);
}

// ---------------------------------------------------------------- residual / dense blocks

TEST(ResidualBlock, ZeroBranchIsIdentity) {
  DualPathNetwork net(small_config(), 11);
  net.zero_residual_branches();
  const auto& block = net.res_stages()[0][0];
  ASSERT_FALSE(block.shortcut.has_value());
  std::mt19937_64 rng(11);
  const Tensor h = random_tensor({2, 4, 10}, rng);
  Tape tape;
  EXPECT_EQ(tape.value(net.residual_block(tape, tape.constant(h), block, Mode::kTrain)), h);
}

TEST(ResidualBlock, BranchContributesWhenNonZero) {
  DualPathNetwork net(small_config(), 12);
  const auto block = net.res_stages()[0][0];
  std::mt19937_64 rng(12);
  const Tensor h = random_tensor({2, 4, 10}, rng);
  Tape tape;
  const Tensor out = tape.value(net.residual_block(tape, tape.constant(h), block, Mode::kEval));
  double diff = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) diff += std::abs(out[i] - h[i]);
  EXPECT_GT(diff, 1e-6);
}

TEST(ResidualBlock, InputJacobianIsIdentityWhenBranchZero) {
  DualPathNetwork net(small_config(), 13);
  net.zero_residual_branches();
  const auto block = net.res_stages()[0][0];
  std::mt19937_64 rng(13);
  Parameter h("h", random_tensor({2, 4, 6}, rng));
  const Tensor w = random_tensor({48}, rng);
  // d(sum w*out)/dh == w exactly when out == h.
  Tape tape;
  Var out = net.residual_block(tape, tape.param(h), block, Mode::kEval);
  Var flat = tape.record(tape.value(out).reshaped({1, 48}), {out},
                         [out](Tape& t, const Tensor& g) { t.accumulate(out, g.reshaped(t.value(out).shape())); });
  tape.backward(ops::sum(tape, ops::matmul_nt(tape, flat, tape.constant(w.reshaped({1, 48})))));
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(h.grad[i], w[i], 1e-12);
  std::vector<Parameter*> params{&h};
  const auto report = finite_diff_check(
      [&](Tape& t) {
        Var o = net.residual_block(t, t.param(h), block, Mode::kEval);
        return ops::sum(t, o);
      },
      params);
  EXPECT_TRUE(report.passed());
}

TEST(DenseBlock, ChannelCountLaw) {
  ModelConfig cfg = small_config();
  cfg.dense.layers_per_stage = {3, 2, 2, 1};
  DualPathNetwork net(cfg, 14);
  std::mt19937_64 rng(14);
  const std::size_t initial = 2 * cfg.dense.growth_rate;
  std::vector<Var> history;
  Tape tape;
  history.push_back(tape.constant(random_tensor({2, initial, 12}, rng)));
  for (std::size_t k = 0; k < 3; ++k) {
    Var out = net.dense_block(tape, history, net.dense_stages()[0][k], Mode::kTrain);
    EXPECT_EQ(tape.value(out).dim(1), cfg.dense.growth_rate);
    history.push_back(out);
    std::size_t total = 0;
    for (Var v : history) total += tape.value(v).dim(1);
    EXPECT_EQ(total, initial + (k + 1) * cfg.dense.growth_rate);
  }
}

TEST(DenseBlock, ConcatOrderIsPartOfContract) {
  ModelConfig cfg = small_config();
  cfg.dense.layers_per_stage = {2, 1, 1, 1};
  DualPathNetwork net(cfg, 15);
  const auto& layer = net.dense_stages()[0][1];  // expects 2*growth + growth = 12 input channels
  std::mt19937_64 rng(15);
  const Tensor p = random_tensor({2, 4, 9}, rng), q = random_tensor({2, 4, 9}, rng), r = random_tensor({2, 4, 9}, rng);
  auto run = [&](const Tensor& a, const Tensor& b) {
    Tape t;
    return t.value(net.dense_block(t, {t.constant(a), t.constant(b), t.constant(r)}, layer, Mode::kEval));
  };
  EXPECT_NE(run(p, q), run(q, p));
  EXPECT_EQ(run(p, p), run(p, p));
}

TEST(DenseBlock, TemporalMismatchRejected) {
  DualPathNetwork net(small_config(), 16);
  std::mt19937_64 rng(16);
  Tape tape;
  EXPECT_THROW(net.dense_block(tape, {tape.constant(random_tensor({2, 8, 9}, rng)),
                                      tape.constant(random_tensor({2, 4, 8}, rng))},
                               net.dense_stages()[0][0], Mode::kEval),
               DimensionError);
}

// ---------------------------------------------------------------- gradients through the network

TEST(NetworkGradients, ClassifierLossesOnlyTouchTheirOwnPath) {
  DualPathNetwork net(small_config(), 17);
  std::mt19937_64 rng(17);
  const Tensor x = random_tensor({4, 16, 6}, rng);
  const std::vector<int> labels{0, 1, 2, 3};
  Tape tape;
  const ForwardOutputs out = net.forward(tape, x, Mode::kTrain);
  zero_grads(net.parameters());
  tape.backward(ops::cross_entropy(tape, out.res_logits, labels));
  auto all_zero = [](const std::vector<Parameter*>& ps) {
    for (Parameter* p : ps)
      for (double g : p->grad.values())
        if (g != 0.0) return false;
    return true;
  };
  EXPECT_TRUE(all_zero(net.parameters(ParamGroup::kDenseBackbone)));
  EXPECT_TRUE(all_zero(net.parameters(ParamGroup::kDenseClassifier)));
  EXPECT_FALSE(all_zero(net.parameters(ParamGroup::kResBackbone)));

  zero_grads(net.parameters());
  tape.backward(ops::cross_entropy(tape, out.dense_logits, labels));
  EXPECT_TRUE(all_zero(net.parameters(ParamGroup::kResBackbone)));
  EXPECT_TRUE(all_zero(net.parameters(ParamGroup::kResClassifier)));
  EXPECT_FALSE(all_zero(net.parameters(ParamGroup::kDenseBackbone)));
}

TEST(NetworkGradients, EveryParameterReceivesGradientFromTotalLoss) {
  DualPathNetwork net(small_config(), 18);
  std::mt19937_64 rng(18);
  const Tensor x = random_tensor({4, 16, 6}, rng);
  const std::vector<int> labels{0, 1, 2, 3};
  Tape tape;
  const ForwardOutputs out = net.forward(tape, x, Mode::kTrain);
  zero_grads(net.parameters());
  tape.backward(build_loss(tape, out, labels, 0.7, 0.5).total);
  for (Parameter* p : net.parameters()) {
    double mag = 0.0;
    for (double g : p->grad.values()) mag += std::abs(g);
    EXPECT_GT(mag, 0.0) << p->id;
  }
}

TEST(NetworkGradients, HeadsAndClassifiersMatchFiniteDifferences) {
  // The full-network check over every parameter lives in the acceptance suite.
  DualPathNetwork net(small_config(4, 3), 19);
  std::mt19937_64 rng(19);
  const Tensor x = random_tensor({4, 16, 4}, rng);
  const std::vector<int> labels{0, 1, 2, 1};
  const std::vector<BatchNormState> frozen = net.norm_states();
  std::vector<Parameter*> params = net.parameters(ParamGroup::kFusionClassifier);
  for (Parameter* p : net.parameters(ParamGroup::kProjectionHeads))
    if (p->id.find("stage4") != std::string::npos) params.push_back(p);
  const auto report = finite_diff_check(
      [&](Tape& t) {
        net.norm_states() = frozen;
        return build_loss(t, net.forward(t, x, Mode::kTrain), labels, 0.7, 0.5).total;
      },
      params);
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

// ---------------------------------------------------------------- checkpoint

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig cfg = small_config();
  cfg.partition = ChannelPartition::make({0, 2, 5}, {1, 3, 4}, 6);
  DualPathNetwork net(cfg, 20);
  std::mt19937_64 rng(20);
  Tape tape;
  net.forward(tape, random_tensor({3, 16, 6}, rng), Mode::kTrain);  // moves running stats off their defaults
  std::stringstream ss;
  save_checkpoint(net, ss);
  const DualPathNetwork loaded = load_checkpoint(ss);
  EXPECT_EQ(loaded.config(), net.config());
  ASSERT_EQ(loaded.parameter_storage().size(), net.parameter_storage().size());
  for (std::size_t i = 0; i < net.parameter_storage().size(); ++i) {
    EXPECT_EQ(loaded.parameter_storage()[i].id, net.parameter_storage()[i].id);
    expect_same(loaded.parameter_storage()[i].value, net.parameter_storage()[i].value);
  }
  for (std::size_t i = 0; i < net.norm_states().size(); ++i) {
    expect_same(loaded.norm_states()[i].running_mean, net.norm_states()[i].running_mean);
    expect_same(loaded.norm_states()[i].running_var, net.norm_states()[i].running_var);
  }
  std::stringstream again;
  save_checkpoint(loaded, again);
  std::stringstream first;
  save_checkpoint(net, first);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Checkpoint, SpecialValuesSurvive) {
  DualPathNetwork net(small_config(), 21);
  Parameter* p = net.find("fusion.classifier.bias");
  p->value[0] = -0.0;
  p->value[1] = 5e-324;
  p->value[2] = 1.7976931348623157e308;
  p->value[3] = 0.1;
  std::stringstream ss;
  save_checkpoint(net, ss);
  DualPathNetwork loaded = load_checkpoint(ss);
  const Tensor& v = loaded.find("fusion.classifier.bias")->value;
  EXPECT_TRUE(std::signbit(v[0]));
  EXPECT_EQ(v[1], 5e-324);
  EXPECT_EQ(v[2], 1.7976931348623157e308);
  EXPECT_EQ(v[3], 0.1);
}

TEST(Checkpoint, CorruptInputsRejected) {
  DualPathNetwork net(small_config(), 22);
  std::stringstream ss;
  save_checkpoint(net, ss);
  const std::string good = ss.str();

  std::istringstream bad_magic("NOT-A-CHECKPOINT 1\n");
  EXPECT_THROW(load_checkpoint(bad_magic), Error);

  std::string truncated = good.substr(0, good.size() / 2);
  std::istringstream trunc(truncated);
  EXPECT_THROW(load_checkpoint(trunc), Error);

  std::string wrong_shape = good;
  const auto pos = wrong_shape.find("param fusion.classifier.bias 5 ");
  ASSERT_NE(pos, std::string::npos);
  wrong_shape.replace(pos, std::string("param fusion.classifier.bias 5 ").size(), "param fusion.classifier.bias 4 ");
  std::istringstream ws(wrong_shape);
  EXPECT_THROW(load_checkpoint(ws), Error);
}
