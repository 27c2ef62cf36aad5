#include <gtest/gtest.h>

#include <filesystem>

#include "avp/errors.hpp"
#include "avp/label_io.hpp"
#include "avp/training.hpp"

using namespace avp;

namespace fs = std::filesystem;

namespace {

SyntheticSpec toy_spec(std::uint64_t seed, std::size_t videos = 48) {
  SyntheticSpec s;
  s.num_videos = videos;
  s.num_classes = 4;
  s.max_events = 2;
  s.audio_feat_dim = 8;
  s.visual_feat_dim = 8;
  s.feature_noise = 0.3;
  s.teacher_noise = 0.0;
  s.seed = seed;
  return s;
}

ModelConfig toy_model() {
  ModelConfig m = ModelConfig::variant();
  m.hidden_dim = 16;
  m.ffn_dim = 32;
  m.heads = 2;
  m.num_layers = 1;
  m.num_classes = 4;
  m.audio_feat_dim = 8;
  m.visual_feat_dim = 8;
  return m;
}

TrainConfig toy_train(LossMode loss, int epochs) {
  TrainConfig t = TrainConfig::variant();
  t.loss = loss;
  t.epochs = epochs;
  t.batch_size = 16;
  t.schedule = {3e-3, 3e-5, 1, std::max(epochs, 2)};
  t.schedule.total_epochs = epochs;
  t.seed = 4;
  return t;
}

std::vector<DenseLabels> elaborated(const SyntheticCorpus& syn) {
  const Thresholds zero{std::vector<double>(4, 0.0), std::vector<double>(4, 0.0)};
  return elaborate_corpus(syn.corpus.samples, syn.teacher, zero);
}

std::vector<double> flat_params(const ModelParams& p) {
  std::vector<double> out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace

TEST(TrainConfig, PresetsAndRoundTrip) {
  const TrainConfig s = TrainConfig::standard(), v = TrainConfig::variant();
  EXPECT_EQ(s.batch_size, 64u);
  EXPECT_EQ(s.epochs, 60);
  EXPECT_EQ(s.schedule.warmup_epochs, 10);
  EXPECT_DOUBLE_EQ(s.schedule.peak_lr, 1e-4);
  EXPECT_DOUBLE_EQ(v.schedule.peak_lr, 3e-4);
  EXPECT_DOUBLE_EQ(v.schedule.min_lr, 3e-6);
  TrainConfig custom = v;
  custom.loss = LossMode::Mixed;
  custom.mixed_audio = ModalityLoss::Kd;
  custom.reduction = TemporalReduction::Sum;
  const TrainConfig back = TrainConfig::from_config(KeyValueConfig::parse(custom.to_config_text()));
  EXPECT_EQ(back.to_config_text(), custom.to_config_text());
  EXPECT_EQ(back.mixed_audio, ModalityLoss::Kd);
}

TEST(TrainConfig, InvalidValuesAreConfigErrors) {
  TrainConfig t = TrainConfig::standard();
  t.epochs = 30;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("batch_size = 0")), ConfigError);
  EXPECT_THROW(TrainConfig::from_config(KeyValueConfig::parse("loss = valour")), ConfigError);
}

TEST(Train, ZeroEpochsReturnsInitialModel) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(1, 8));
  TrainConfig t = toy_train(LossMode::Base, 0);
  const TrainResult r = train(toy_model(), t, TrainData{&syn.corpus, nullptr, {}, {}});
  EXPECT_EQ(flat_params(r.params), flat_params(init_model(toy_model(), t.seed)));
  EXPECT_TRUE(r.report.epochs.empty());
}

TEST(Train, MissingSupervisionIsUsageError) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(1, 8));
  EXPECT_THROW(train(toy_model(), toy_train(LossMode::Valor, 2), TrainData{&syn.corpus, nullptr, {}, {}}),
               UsageError);
  EXPECT_THROW(train(toy_model(), toy_train(LossMode::Kd, 2), TrainData{&syn.corpus, nullptr, {}, {}}), UsageError);
}

TEST(Train, SameSeedIsBitIdenticalForFixedJobs) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(2, 24));
  const auto dense = elaborated(syn);
  for (std::size_t jobs : {1u, 3u}) {
    TrainConfig t = toy_train(LossMode::Valor, 3);
    t.jobs = jobs;
    const TrainResult a = train(toy_model(), t, TrainData{&syn.corpus, nullptr, dense, {}});
    const TrainResult b = train(toy_model(), t, TrainData{&syn.corpus, nullptr, dense, {}});
    EXPECT_EQ(flat_params(a.params), flat_params(b.params)) << "jobs " << jobs;
    EXPECT_EQ(a.report.to_json(false), b.report.to_json(false));
  }
}

TEST(Train, LossFallsOverEarlyEpochs) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(3));
  const TrainResult r =
      train(toy_model(), toy_train(LossMode::Valor, 6), TrainData{&syn.corpus, nullptr, elaborated(syn), {}});
  ASSERT_EQ(r.report.epochs.size(), 6u);
  for (std::size_t e = 2; e < 6; ++e) EXPECT_LE(r.report.epochs[e].loss, r.report.epochs[e - 1].loss * 1.02);
  EXPECT_LT(r.report.epochs[5].loss, r.report.epochs[0].loss);
}

TEST(Train, SeparableCorpusIsLearnedWithDenseLabels) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(4, 64));
  const TrainResult r =
      train(toy_model(), toy_train(LossMode::Valor, 30), TrainData{&syn.corpus, nullptr, syn.corpus.dense_gt(), {}});
  const MetricsReport m = evaluate_model(r.params, syn.corpus);
  EXPECT_GE(m.segment.type_av, 95.0) << report_to_text(m);
}

TEST(Train, ImportedLabelsGiveTheSameRunAsInMemoryLabels) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(5, 16));
  const auto dense = elaborated(syn);
  std::vector<LabeledVideo> videos;
  for (std::size_t i = 0; i < dense.size(); ++i) videos.push_back({syn.corpus.samples[i].video_id, dense[i]});
  const fs::path path = fs::temp_directory_path() / "avparse_test_train_labels.txt";
  save_dense_labels(path, videos);
  const auto imported = import_external_labels(path, syn.corpus.samples, 4);
  const TrainConfig t = toy_train(LossMode::Valor, 2);
  const TrainResult a = train(toy_model(), t, TrainData{&syn.corpus, nullptr, dense, {}});
  const TrainResult b = train(toy_model(), t, TrainData{&syn.corpus, nullptr, imported, {}});
  EXPECT_EQ(a.report.epochs[0].loss, b.report.epochs[0].loss);
  EXPECT_EQ(flat_params(a.params), flat_params(b.params));
}

TEST(Train, ValidationSelectsBestEpochAndRecordsScores) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(6, 40));
  const SplitIndices s = split_corpus(syn.corpus, {0.75, 0.25, 0.0}, 1);
  const Corpus tr = syn.corpus.subset(s.train), val = syn.corpus.subset(s.val);
  const TrainResult r = train(toy_model(), toy_train(LossMode::Valor, 4), TrainData{&tr, &val, tr.dense_gt(), {}});
  ASSERT_GE(r.report.best_epoch, 0);
  double best = -1;
  for (const auto& e : r.report.epochs) {
    ASSERT_TRUE(e.val_type_av.has_value());
    best = std::max(best, *e.val_type_av);
  }
  EXPECT_EQ(*r.report.epochs[static_cast<std::size_t>(r.report.best_epoch)].val_type_av, best);
  ASSERT_TRUE(r.report.final_validation.has_value());
  EXPECT_NEAR(r.report.final_validation->segment.type_av, best, 1e-9);
}

TEST(Train, EveryLossModeRunsAndReportsComponents) {
  const SyntheticCorpus syn = generate_synthetic(toy_spec(7, 8));
  const auto dense = elaborated(syn);
  std::vector<KdTargets> kd;
  for (const auto& z : syn.teacher) kd.push_back(kd_targets(z));
  for (LossMode mode : {LossMode::Base, LossMode::Kd, LossMode::Valor, LossMode::Mixed}) {
    const TrainResult r = train(toy_model(), toy_train(mode, 2), TrainData{&syn.corpus, nullptr, dense, kd});
    ASSERT_EQ(r.report.epochs.size(), 2u);
    EXPECT_TRUE(std::isfinite(r.report.epochs[1].loss)) << to_string(mode);
    EXPECT_TRUE(r.report.epochs[1].components.count("video")) << to_string(mode);
  }
}

TEST(Train, AveModeNeedsBackgroundOutput) {
  SyntheticSpec spec = toy_spec(8, 8);
  spec.ave_mode = true;
  const SyntheticCorpus syn = generate_synthetic(spec);
  EXPECT_THROW(train(toy_model(), toy_train(LossMode::AveValor, 2), TrainData{&syn.corpus, nullptr, syn.corpus.dense_gt(), {}}),
               ConfigError);
  ModelConfig m = toy_model();
  m.ave_mode = true;
  const TrainResult r = train(m, toy_train(LossMode::AveValor, 2), TrainData{&syn.corpus, nullptr, syn.corpus.dense_gt(), {}});
  EXPECT_TRUE(evaluate_model(r.params, syn.corpus).ave_accuracy.has_value());
}
