# Copyright 2024 The sedkit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Tests for sedkit.lib.trainer."""

import math
import os
import tempfile
import unittest
from sedkit.lib import frame_model
from sedkit.lib import loss
from sedkit.lib import metrics
from sedkit.lib import postprocess
from sedkit.lib import sed_errors
from sedkit.lib import synth
from sedkit.lib import trainer
from sedkit.lib import weighting
import mock
import numpy as np
import parameterized

HOP = 0.064
VOCAB = frame_model.ClassVocabulary(['dog', 'speech'])

CLEAN = synth.SynthConfig(num_clips=8, clip_frames=100, num_classes=3,
                          event_rate=2.0, duration_range=(6, 20),
                          score_noise_std=0.0, boundary_blur_frames=0,
                          feature_dim=8, rng_seed=4)


def random_clip(seed, num_frames=15, feature_dim=3):
  rng = np.random.default_rng(seed)
  features = rng.standard_normal((num_frames, feature_dim))
  values = np.zeros((num_frames, 2))
  values[4:9, 0] = 1
  values[7:, 1] = 1
  labels = frame_model.LabelTensor(
      frame_model.FrameGrid(num_frames, HOP), VOCAB, values)
  return features, labels


def random_instance(seed, num_frames=15, feature_dim=3, context=1):
  """Random features, label runs, weights and consistency target."""
  rng = np.random.default_rng(seed)
  features = rng.standard_normal((num_frames, feature_dim))
  values = np.zeros((num_frames, 2))
  for k in range(2):
    for _ in range(int(rng.integers(1, 3))):
      onset = int(rng.integers(0, num_frames - 1))
      values[onset:onset + int(rng.integers(1, 8)), k] = 1
  labels = frame_model.LabelTensor(
      frame_model.FrameGrid(num_frames, HOP), VOCAB, values)
  model = trainer.init_model(VOCAB, feature_dim, context=context)
  model = model.with_weights(
      rng.normal(0.0, 0.3, model.weights.shape))
  target = frame_model.ScoreTensor(labels.grid, VOCAB,
                                   rng.uniform(0.1, 0.9, values.shape))
  return features, labels, model, target


class ModelTest(unittest.TestCase):

  def test_design_matrix(self):
    features = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    design = trainer.design_matrix(features, 1)
    np.testing.assert_array_equal(
        [[0, 0, 1, 2, 3, 4, 1],
         [1, 2, 3, 4, 5, 6, 1],
         [3, 4, 5, 6, 0, 0, 1]], design)

  def test_design_matrix_without_context(self):
    features = np.array([[1.0], [2.0]])
    np.testing.assert_array_equal([[1, 1], [2, 1]],
                                  trainer.design_matrix(features, 0))

  def test_init_model(self):
    zero = trainer.init_model(VOCAB, 3, context=1)
    self.assertEqual((10, 2), zero.weights.shape)
    self.assertFalse(zero.weights.any())
    seeded = trainer.init_model(VOCAB, 3, context=1, seed=5)
    np.testing.assert_array_equal(
        seeded.weights, trainer.init_model(VOCAB, 3, context=1,
                                           seed=5).weights)
    self.assertLess(np.abs(seeded.weights).max(), 0.1)

  def test_weights_are_read_only(self):
    model = trainer.init_model(VOCAB, 3)
    with self.assertRaises(ValueError):
      model.weights[0, 0] = 1.0

  @parameterized.parameterized.expand([
      ('wrong_shape', np.zeros((4, 2)), sed_errors.DimensionError),
      ('not_finite', np.full((10, 2), np.nan), sed_errors.ValidationError),
  ])
  def test_invalid_weights(self, unused_name, weights, error):
    del unused_name
    with self.assertRaises(error):
      trainer.LinearFrameModel(VOCAB, 1, 3, weights)

  def test_predict(self):
    model = trainer.init_model(VOCAB, 3, context=1)
    tensor = trainer.predict(model, np.ones((6, 3)), HOP)
    self.assertEqual(6, tensor.num_frames)
    np.testing.assert_array_equal(np.full((6, 2), 0.5), tensor.values)

    weights = np.zeros((10, 2))
    weights[-1, 0] = 2.0
    tensor = trainer.predict(model.with_weights(weights), np.ones((6, 3)),
                             HOP)
    np.testing.assert_allclose(1 / (1 + math.exp(-2.0)), tensor.values[:, 0])

  @parameterized.parameterized.expand([
      ('wrong_dim', np.ones((6, 4))),
      ('one_dimensional', np.ones(6)),
      ('no_frames', np.ones((0, 3))),
  ])
  def test_predict_rejects_features(self, unused_name, features):
    del unused_name
    with self.assertRaises(sed_errors.DimensionError):
      trainer.predict(trainer.init_model(VOCAB, 3), features, HOP)


class TrainConfigTest(unittest.TestCase):

  def test_defaults(self):
    config = trainer.TrainConfig()
    self.assertEqual(weighting.WindowParams(), config.window)
    self.assertEqual(loss.CombinerWeights(), config.combiner)
    self.assertEqual(200, config.epochs)

  @parameterized.parameterized.expand([
      ('negative_epochs', {'epochs': -1}, 'train.epochs'),
      ('zero_learning_rate', {'learning_rate': 0.0}, 'train.learning_rate'),
      ('zero_batch', {'batch_clips': 0}, 'train.batch_clips'),
      ('fractional_context', {'context': 1.5}, 'train.context'),
      ('unknown_weighting', {'class_weighting': 'focal'},
       'train.class_weighting'),
      ('unknown_normalization', {'mask_normalization': 'max'},
       'train.mask_normalization'),
  ])
  def test_invalid(self, unused_name, kwargs, key):
    del unused_name
    with self.assertRaises(sed_errors.ConfigError) as context:
      trainer.TrainConfig(**kwargs)
    self.assertEqual(key, context.exception.key)


class GradientTest(unittest.TestCase):

  @parameterized.parameterized.expand([
      ('bce', weighting.WindowParams(0, 7), loss.CombinerWeights(), None),
      ('owbce', weighting.WindowParams(12, 5), loss.CombinerWeights(), None),
      ('class_weights', weighting.WindowParams(6, 3), loss.CombinerWeights(),
       [1.5, 0.5]),
      ('weak', weighting.WindowParams(12, 5), loss.CombinerWeights(0.5, 0),
       None),
      ('consistency', weighting.WindowParams(12, 5),
       loss.CombinerWeights(0, 2.0), None),
  ])
  def test_matches_finite_differences(self, unused_name, window, combiner,
                                      class_weights):
    del unused_name
    config = trainer.TrainConfig(window=window, combiner=combiner, context=1)
    for seed in range(20):
      features, labels, model, target = random_instance(seed)

      def objective(weights, model=model, features=features, labels=labels,
                    target=target):
        breakdown, _ = trainer.loss_and_gradient(
            model.with_weights(weights), features, labels, config,
            class_weights, target)
        return breakdown.total

      _, analytic = trainer.loss_and_gradient(model, features, labels,
                                              config, class_weights, target)
      step = 1e-6
      numeric = np.zeros_like(analytic)
      for index in np.ndindex(analytic.shape):
        plus = np.array(model.weights)
        minus = np.array(model.weights)
        plus[index] += step
        minus[index] -= step
        numeric[index] = (objective(plus) - objective(minus)) / (2 * step)
      np.testing.assert_allclose(numeric, analytic, rtol=1e-4, atol=1e-8,
                                 err_msg='seed %d' % seed)

  def test_breakdown(self):
    features, labels = random_clip(1)
    config = trainer.TrainConfig(
        window=weighting.WindowParams(12, 7),
        combiner=loss.CombinerWeights(0.5, 2.0), context=1)
    model = trainer.init_model(VOCAB, 3, context=1)
    target = frame_model.ScoreTensor(labels.grid, VOCAB,
                                     np.full(labels.values.shape, 0.5))
    breakdown, _ = trainer.loss_and_gradient(model, features, labels, config,
                                             target=target)
    self.assertAlmostEqual(math.log(2), breakdown.weak)
    self.assertEqual(0.0, breakdown.consistency)
    self.assertAlmostEqual(breakdown.strong + 0.5 * math.log(2),
                           breakdown.total)


class TrainTest(unittest.TestCase):

  def test_learns_separable_corpus(self):
    corpus = synth.generate_corpus(CLEAN)
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim)
    config = trainer.TrainConfig(epochs=100, learning_rate=0.5,
                                 batch_clips=1, window=weighting.WindowParams(
                                     0, 7))
    result = trainer.train(model, corpus, config)
    self.assertEqual(100, len(result.trace))
    self.assertLess(result.trace[-1].strong, 0.1)
    self.assertLess(result.trace[-1].total, result.trace[0].total)

  def test_reproducible(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=4))
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim, seed=1)
    config = trainer.TrainConfig(epochs=3, batch_clips=2, seed=7)
    first = trainer.train(model, corpus, config)
    second = trainer.train(model, corpus, config)
    np.testing.assert_array_equal(first.model.weights, second.model.weights)
    self.assertEqual(first.trace, second.trace)

  def test_zero_epochs(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=2))
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim, seed=1)
    result = trainer.train(model, corpus, trainer.TrainConfig(epochs=0))
    self.assertEqual([], result.trace)
    np.testing.assert_array_equal(model.weights, result.model.weights)

  @parameterized.parameterized.expand([
      ('count_weights', {'class_weighting': 'count'}),
      ('effective_weights', {'class_weighting': 'effective', 'lam': 4}),
      ('weak_and_consistency', {'combiner': loss.CombinerWeights(0.5, 1.0)}),
  ])
  def test_loss_variants_train(self, unused_name, kwargs):
    del unused_name
    corpus = synth.generate_corpus(
        CLEAN._replace(num_clips=6, event_rate=4.0))
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim)
    result = trainer.train(model, corpus, trainer.TrainConfig(epochs=5,
                                                              **kwargs))
    self.assertEqual(5, len(result.trace))
    self.assertTrue(all(math.isfinite(b.total) for b in result.trace))

  def test_vocabulary_mismatch(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=2))
    with self.assertRaises(sed_errors.DimensionError):
      trainer.train(trainer.init_model(VOCAB, CLEAN.feature_dim), corpus,
                    trainer.TrainConfig(epochs=1))

  def test_non_finite_loss(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=2))
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim)
    with mock.patch.object(trainer.loss, 'owbce_loss',
                           return_value=float('nan')):
      with self.assertRaises(sed_errors.TrainingError) as context:
        trainer.train(model, corpus, trainer.TrainConfig(epochs=2))
    self.assertEqual(0, context.exception.epoch)

  def test_predict_corpus(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=3))
    scores = trainer.predict_corpus(
        trainer.init_model(corpus.vocab, CLEAN.feature_dim), corpus)
    self.assertEqual(sorted(corpus.clip_ids), sorted(scores))
    self.assertEqual(corpus.vocab, scores[corpus.clip_ids[0]].vocab)

  @parameterized.parameterized.expand([
      ('bce', weighting.WindowParams(0, 7), 0.5),
      ('owbce', weighting.WindowParams(4, 5), 0.05),
  ])
  def test_full_batch_loss_trace_decreases(self, unused_name, window,
                                           learning_rate):
    del unused_name
    corpus = synth.generate_corpus(CLEAN)
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim)
    config = trainer.TrainConfig(epochs=60, learning_rate=learning_rate,
                                 batch_clips=CLEAN.num_clips, window=window)
    trace = [b.total for b in trainer.train(model, corpus, config).trace]
    increases = [
        epoch for epoch in range(1, len(trace))
        if trace[epoch] > trace[epoch - 1]
    ]
    self.assertLessEqual(len(increases), 0.05 * (len(trace) - 1), increases)
    self.assertLess(trace[-1], trace[0])

  def test_zero_alpha_trains_plain_bce(self):

    def plain_loss(labels, scores, params, class_weights=None):
      del params
      return loss.aggregate_loss(loss.bce_elementwise(labels, scores),
                                 class_weights=class_weights)

    def plain_gradient(labels, scores, params, class_weights=None):
      del params, class_weights
      return loss.bce_gradient_values(labels.values, scores.values,
                                      np.ones(labels.values.shape))

    corpus = synth.generate_corpus(CLEAN._replace(num_clips=4))
    model = trainer.init_model(corpus.vocab, CLEAN.feature_dim, seed=2)
    config = trainer.TrainConfig(epochs=5, batch_clips=2,
                                 window=weighting.WindowParams(0, 7))
    weighted = trainer.train(model, corpus, config)
    with mock.patch.object(trainer.loss, 'owbce_loss',
                           side_effect=plain_loss):
      with mock.patch.object(trainer.loss, 'owbce_gradient',
                             side_effect=plain_gradient):
        plain = trainer.train(model, corpus, config)
    np.testing.assert_array_equal(plain.model.weights, weighted.model.weights)
    self.assertEqual(plain.trace, weighted.trace)


class MaskNormalizationTest(unittest.TestCase):

  def setUp(self):
    super(MaskNormalizationTest, self).setUp()
    self.corpus = synth.generate_corpus(
        CLEAN._replace(num_clips=6, event_rate=4.0))

  def test_scale(self):
    window = weighting.WindowParams(12, 7)
    self.assertEqual(
        1.0,
        trainer.corpus_mask_scale(self.corpus,
                                  trainer.TrainConfig(window=window)))
    masks = [
        weighting.build_weight_mask(labels, window).values
        for labels in self.corpus.labels
    ]
    expected = 1.0 / np.mean(np.concatenate(masks))
    scale = trainer.corpus_mask_scale(
        self.corpus,
        trainer.TrainConfig(window=window, mask_normalization='mean'))
    self.assertAlmostEqual(expected, scale)
    self.assertLess(scale, 1.0)

  def test_flat_mask_is_unchanged(self):
    model = trainer.init_model(self.corpus.vocab, CLEAN.feature_dim, seed=2)
    config = trainer.TrainConfig(epochs=3, batch_clips=2,
                                 window=weighting.WindowParams(0, 7))
    normalized = config._replace(mask_normalization='mean')
    self.assertEqual(1.0, trainer.corpus_mask_scale(self.corpus, normalized))
    first = trainer.train(model, self.corpus, config)
    second = trainer.train(model, self.corpus, normalized)
    np.testing.assert_array_equal(first.model.weights, second.model.weights)
    self.assertEqual(first.trace, second.trace)

  @parameterized.parameterized.expand([
      ('no_class_weights', 'none'),
      ('count_weights', 'count'),
  ])
  def test_scales_strong_loss(self, unused_name, class_weighting):
    del unused_name
    model = trainer.init_model(self.corpus.vocab, CLEAN.feature_dim, seed=2)
    config = trainer.TrainConfig(epochs=1, learning_rate=1e-12,
                                 window=weighting.WindowParams(12, 7),
                                 class_weighting=class_weighting)
    normalized = config._replace(mask_normalization='mean')
    scale = trainer.corpus_mask_scale(self.corpus, normalized)
    plain = trainer.train(model, self.corpus, config).trace[0]
    scaled = trainer.train(model, self.corpus, normalized).trace[0]
    self.assertAlmostEqual(scale * plain.strong, scaled.strong, places=9)
    self.assertAlmostEqual(scaled.strong, scaled.total, places=12)


class ModelFileTest(unittest.TestCase):

  def setUp(self):
    super(ModelFileTest, self).setUp()
    self.tmpdir = tempfile.TemporaryDirectory()
    self.path = os.path.join(self.tmpdir.name, 'model.txt')

  def tearDown(self):
    self.tmpdir.cleanup()
    super(ModelFileTest, self).tearDown()

  def _write(self, text):
    with open(self.path, 'w') as f:
      f.write(text)

  def test_round_trip(self):
    model = trainer.init_model(VOCAB, 3, context=1, seed=3)
    trainer.write_model_file(model, self.path)
    loaded = trainer.read_model_file(self.path)
    self.assertEqual(VOCAB, loaded.vocab)
    self.assertEqual((1, 3), (loaded.context, loaded.feature_dim))
    np.testing.assert_allclose(model.weights, loaded.weights, rtol=1e-8)

  def test_format(self):
    model = trainer.init_model(frame_model.ClassVocabulary(['dog']), 1,
                               context=0)
    self.assertEqual('context=0 feature_dim=1 classes=dog\n0\n0\n',
                     trainer.format_model_file(model))

  @parameterized.parameterized.expand([
      ('empty', '', None),
      ('bad_header', 'context=1 classes=dog\n', 1),
      ('bad_weight', 'context=0 feature_dim=1 classes=dog\n0.5\nabc\n', 3),
      ('wrong_count', 'context=0 feature_dim=1 classes=dog\n0.5\n', None),
  ])
  def test_parse_errors(self, unused_name, text, line_num):
    del unused_name
    self._write(text)
    with self.assertRaises(sed_errors.ParseError) as context:
      trainer.read_model_file(self.path)
    self.assertEqual(line_num, context.exception.line_num)


class ComparisonTest(unittest.TestCase):

  @parameterized.parameterized.expand([
      ('gain', 0.5, 0.6, 20.0),
      ('loss', 0.5, 0.4, -20.0),
      ('zero_baseline', 0.0, 0.4, float('nan')),
  ])
  def test_relative_gain(self, unused_name, baseline, value, expected):
    del unused_name
    gain = trainer.relative_gain(baseline, value)
    if math.isnan(expected):
      self.assertTrue(math.isnan(gain))
    else:
      self.assertAlmostEqual(expected, gain)

  def test_summarize(self):
    runs = [
        trainer.RunResult('bce', 0, 0.4, 0.2, 0.6, 0.1, 0.2),
        trainer.RunResult('bce', 1, 0.6, 0.4, 0.8, 0.3, 0.4),
    ]
    summary = trainer.summarize('bce', runs)
    self.assertEqual('bce', summary.arm)
    np.testing.assert_allclose([0.5, 0.3, 0.7, 0.2, 0.3], summary[1:])

  def test_compare_losses_pairs_seeds(self):
    calls = []

    def fake_run(train_corpus, eval_corpus, config, eval_config, seed,
                 arm=''):
      del train_corpus, eval_corpus, eval_config
      calls.append((arm, seed, config.window))
      f1 = 0.5 if arm == 'bce' else 0.6
      return trainer.RunResult(arm, seed, f1, f1, f1, 0.1, 0.1)

    config = trainer.TrainConfig(window=weighting.WindowParams(12, 7))
    with mock.patch.object(trainer, 'train_and_evaluate',
                           side_effect=fake_run):
      report = trainer.compare_losses(None, None, config, None, seeds=(3, 4))

    self.assertEqual([('bce', 3), ('bce', 4), ('owbce', 3), ('owbce', 4)],
                     [(r.arm, r.seed) for r in report.runs])
    windows = {arm: window for arm, _, window in calls}
    self.assertEqual(weighting.WindowParams(0, 7), windows['bce'])
    self.assertEqual(weighting.WindowParams(12, 7), windows['owbce'])
    self.assertEqual(['bce', 'owbce'], [s.arm for s in report.summaries])
    self.assertAlmostEqual(20.0, report.gains['event_f1'])
    self.assertAlmostEqual(0.0, report.gains['onset_error'])

  def test_train_and_evaluate(self):
    corpus = synth.generate_corpus(CLEAN._replace(num_clips=4))
    eval_config = metrics.EvalConfig(
        postprocess=postprocess.PostprocessConfig.uniform(len(corpus.vocab)),
        f1=metrics.F1Config(),
        psds1=metrics.scenario_1((0.25, 0.5, 0.75)),
        psds2=metrics.scenario_2((0.25, 0.5, 0.75)))
    result = trainer.train_and_evaluate(corpus, corpus,
                                        trainer.TrainConfig(epochs=2),
                                        eval_config, seed=1, arm='owbce')
    self.assertEqual(('owbce', 1), (result.arm, result.seed))
    for value in (result.event_f1, result.psds1, result.psds2):
      self.assertGreaterEqual(value, 0.0)
      self.assertLessEqual(value, 1.0)


if __name__ == '__main__':
  unittest.main()
