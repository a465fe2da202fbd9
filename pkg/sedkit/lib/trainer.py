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
"""A linear frame classifier trained by SGD on BCE or OWBCE.

The model maps the features of a (2c + 1)-frame context window, zero padded
at the clip edges, through an affine map and a sigmoid:

  y_hat(n) = sigmoid([x(n - c), ..., x(n + c), 1] . W)

Gradients are analytic: the loss gradient with respect to the scores is
chained through the sigmoid (y_hat * (1 - y_hat)) and the affine map.
"""

import collections
import math

from . import frame_model
from . import loss
from . import metrics
from . import sed_errors
from . import sed_util
from . import weighting
import numpy as np
import scipy.special

DEFAULT_CONTEXT = 2
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# Standard deviation of the seeded initial weights.
INIT_SCALE = 0.01

_WEIGHT_FORMAT = '%.9g'

ARMS = ('bce', 'owbce')

MASK_NORMALIZATIONS = ('none', 'mean')


class LinearFrameModel(
    collections.namedtuple('LinearFrameModel',
                           ['vocab', 'context', 'feature_dim', 'weights'])):
  """Weights of shape ((2c + 1) * D + 1, K); the last row is the bias."""
  __slots__ = ()

  def __new__(cls, vocab, context, feature_dim, weights):
    context = int(context)
    feature_dim = int(feature_dim)
    if context < 0:
      raise sed_errors.ConfigError('train.context',
                                   'must be >= 0, got %d' % context)
    if feature_dim < 1:
      raise sed_errors.ValidationError(
          'feature_dim must be >= 1, got %d' % feature_dim)
    weights = np.array(weights, dtype=np.float64)
    expected = (num_inputs(context, feature_dim), len(vocab))
    if weights.shape != expected:
      raise sed_errors.DimensionError('Expected weights of shape %s, got %s' %
                                      (expected, weights.shape))
    if not np.all(np.isfinite(weights)):
      raise sed_errors.ValidationError('Model weights must be finite')
    weights.setflags(write=False)
    return super(LinearFrameModel, cls).__new__(cls, vocab, context,
                                                feature_dim, weights)

  def with_weights(self, weights):
    return LinearFrameModel(self.vocab, self.context, self.feature_dim,
                            weights)


def num_inputs(context, feature_dim):
  return (2 * context + 1) * feature_dim + 1


def init_model(vocab, feature_dim, context=DEFAULT_CONTEXT, seed=None):
  """Zero weights, or small Gaussian weights drawn from seed."""
  shape = (num_inputs(context, feature_dim), len(vocab))
  if seed is None:
    weights = np.zeros(shape)
  else:
    weights = INIT_SCALE * np.random.default_rng(seed).standard_normal(shape)
  return LinearFrameModel(vocab, context, feature_dim, weights)


class TrainConfig(
    collections.namedtuple('TrainConfig', [
        'epochs', 'learning_rate', 'batch_clips', 'window', 'combiner', 'seed',
        'context', 'class_weighting', 'lam', 'mask_normalization'
    ])):
  """SGD settings.

  Attributes:
    epochs (int): passes over the corpus, >= 0.
    learning_rate (float): > 0.
    batch_clips (int): clips per SGD step, > 0.
    window (WindowParams): OWBCE window; alpha = 0 trains plain BCE.
    combiner (CombinerWeights): weak and consistency loss weights.
    seed (int): seeds the batch order.
    context (int): frames of context on each side.
    class_weighting (str): 'none', 'count' or 'effective'.
    lam (float): lambda of the 'effective' class weighting.
    mask_normalization (str): 'none', or 'mean' to divide the strong loss by
      the mean weight-mask entry of the training corpus.
  """
  __slots__ = ()

  def __new__(cls,
              epochs=200,
              learning_rate=0.5,
              batch_clips=4,
              window=None,
              combiner=None,
              seed=0,
              context=DEFAULT_CONTEXT,
              class_weighting='none',
              lam=weighting.DEFAULT_LAMBDA,
              mask_normalization='none'):
    if int(epochs) != epochs or epochs < 0:
      raise sed_errors.ConfigError('train.epochs',
                                   'must be an integer >= 0, got %r' % epochs)
    if not math.isfinite(learning_rate) or learning_rate <= 0:
      raise sed_errors.ConfigError('train.learning_rate',
                                   'must be > 0, got %r' % learning_rate)
    if int(batch_clips) != batch_clips or batch_clips < 1:
      raise sed_errors.ConfigError(
          'train.batch_clips', 'must be an integer >= 1, got %r' % batch_clips)
    if int(context) != context or context < 0:
      raise sed_errors.ConfigError('train.context',
                                   'must be an integer >= 0, got %r' % context)
    if class_weighting not in weighting.CLASS_WEIGHTING_SCHEMES:
      raise sed_errors.ConfigError(
          'train.class_weighting', 'must be one of %s, got %r' %
          (', '.join(weighting.CLASS_WEIGHTING_SCHEMES), class_weighting))
    if mask_normalization not in MASK_NORMALIZATIONS:
      raise sed_errors.ConfigError(
          'train.mask_normalization', 'must be one of %s, got %r' %
          (', '.join(MASK_NORMALIZATIONS), mask_normalization))
    return super(TrainConfig, cls).__new__(
        cls, int(epochs), float(learning_rate), int(batch_clips),
        window if window is not None else weighting.WindowParams(),
        combiner if combiner is not None else loss.CombinerWeights(),
        int(seed), int(context), class_weighting, float(lam),
        mask_normalization)


class TrainResult(collections.namedtuple('TrainResult', ['model', 'trace'])):
  """The trained model and one LossBreakdown per epoch."""
  __slots__ = ()


def design_matrix(features, context):
  """Stack zero-padded context windows and a bias column.

  Args:
    features: N x D array.
    context: frames on each side.

  Returns:
    N x ((2 * context + 1) * D + 1) array; the block for offset o (from
    -context to context) holds features[n + o].
  """
  features = np.asarray(features, dtype=np.float64)
  num_frames = features.shape[0]
  padded = np.pad(features, ((context, context), (0, 0)))
  blocks = [padded[i:i + num_frames] for i in range(2 * context + 1)]
  blocks.append(np.ones((num_frames, 1)))
  return np.hstack(blocks)


def _check_features(model, features):
  features = np.asarray(features, dtype=np.float64)
  if features.ndim != 2 or features.shape[1] != model.feature_dim:
    raise sed_errors.DimensionError(
        'Expected N x %d features, got shape %s' %
        (model.feature_dim, features.shape))
  if not features.shape[0]:
    raise sed_errors.DimensionError('Features have no frames')
  return features


def _scores(model, design, frame_hop):
  grid = frame_model.FrameGrid(design.shape[0], frame_hop)
  return frame_model.ScoreTensor(grid, model.vocab,
                                 scipy.special.expit(design @ model.weights))


def predict(model, features, frame_hop):
  """Returns the ScoreTensor of one clip."""
  features = _check_features(model, features)
  return _scores(model, design_matrix(features, model.context), frame_hop)


def loss_and_gradient(model, features, labels, config, class_weights=None,
                      target=None):
  """Training loss of one clip and its gradient with respect to the weights.

  Args:
    model: (LinearFrameModel) current model.
    features: N x D array.
    labels: (LabelTensor) strong labels of the clip.
    config: (TrainConfig) supplies the window and the loss combiner.
    class_weights: optional K class weights for the strong loss.
    target: optional ScoreTensor the consistency term pulls toward.

  Returns:
    (LossBreakdown, gradient array shaped like model.weights).
  """
  features = _check_features(model, features)
  design = design_matrix(features, model.context)
  scores = _scores(model, design, labels.grid.frame_hop)
  frame_model.check_compatible(labels, scores)

  strong = loss.owbce_loss(labels, scores, config.window, class_weights)
  score_gradient = loss.owbce_gradient(labels, scores, config.window,
                                       class_weights)
  weak = 0.0
  consistency = 0.0
  if config.combiner.w_weak:
    clip_labels = labels.values.max(axis=0)
    weak = loss.weak_loss(clip_labels, scores)
    score_gradient = score_gradient + config.combiner.w_weak * (
        loss.weak_gradient(clip_labels, scores))
  if config.combiner.w_cons and target is not None:
    consistency = loss.consistency_loss(scores, target)
    score_gradient = score_gradient + config.combiner.w_cons * (
        loss.consistency_gradient(scores, target))

  total = strong + config.combiner.w_weak * weak + (
      config.combiner.w_cons * consistency)
  breakdown = loss.LossBreakdown(strong, weak, consistency, total)
  logit_gradient = score_gradient * scores.values * (1.0 - scores.values)
  return breakdown, design.T @ logit_gradient


def _mean_breakdown(breakdowns):
  count = len(breakdowns)
  return loss.LossBreakdown(*[
      math.fsum(values) / count for values in zip(*breakdowns)
  ])


def _corpus_class_weights(corpus, config):
  if config.class_weighting == 'none':
    return None
  stats = weighting.collect_class_stats(corpus.labels, corpus.vocab)
  return weighting.class_weight_vector(stats, config.class_weighting,
                                       config.lam)


def corpus_mask_scale(corpus, config):
  """Strong-loss scale of the mask normalization: 1 / mean mask entry.

  Returns 1.0 under 'none', and exactly 1.0 for a flat (alpha = 0) mask.
  """
  if config.mask_normalization == 'none':
    return 1.0
  total = 0.0
  count = 0
  for labels in corpus.labels:
    mask = weighting.build_weight_mask(labels, config.window).values
    total += math.fsum(mask.ravel())
    count += mask.size
  return count / total


def _strong_class_weights(corpus, config):
  """Class weights with the mask normalization folded in (None if flat)."""
  class_weights = _corpus_class_weights(corpus, config)
  scale = corpus_mask_scale(corpus, config)
  if scale == 1.0:
    return class_weights
  if class_weights is None:
    class_weights = np.ones(len(corpus.vocab))
  sed_util.log_progress('strong loss scaled by %.6f' % scale)
  return np.asarray(class_weights, dtype=np.float64) * scale


def train(model, corpus, config):
  """Train model on a corpus by mini-batch SGD.

  Each epoch visits the clips in an order drawn from config.seed, in batches
  of config.batch_clips; a step follows the mean gradient of the batch. The
  consistency term compares against the model's predictions at the start
  of the epoch. The trace holds the corpus-mean loss after every epoch.
  Under config.mask_normalization 'mean' the strong loss, traced values
  included, is divided by the corpus-mean weight-mask entry.

  Args:
    model: (LinearFrameModel) initial model.
    corpus: object with vocab, grid, labels and features attributes (e.g.
      a SynthCorpus).
    config: (TrainConfig) settings.

  Returns:
    A TrainResult.

  Raises:
    DimensionError: if the corpus vocabulary differs from the model's.
    TrainingError: if the loss or the weights stop being finite.
  """
  if corpus.vocab != model.vocab:
    raise sed_errors.DimensionError(
        'Model classes %s do not match corpus classes %s' %
        (list(model.vocab.names), list(corpus.vocab.names)))
  class_weights = _strong_class_weights(corpus, config)
  rng = np.random.default_rng(config.seed)
  frame_hop = corpus.grid.frame_hop
  num_clips = len(corpus.labels)
  weights = np.array(model.weights)
  trace = []

  for epoch in range(config.epochs):
    targets = [None] * num_clips
    if config.combiner.w_cons:
      targets = [predict(model, f, frame_hop) for f in corpus.features]
    order = rng.permutation(num_clips)
    for start in range(0, num_clips, config.batch_clips):
      batch = order[start:start + config.batch_clips]
      gradient = np.zeros_like(weights)
      for i in batch:
        breakdown, clip_gradient = loss_and_gradient(
            model, corpus.features[i], corpus.labels[i], config,
            class_weights, targets[i])
        if not math.isfinite(breakdown.total):
          raise sed_errors.TrainingError('loss is not finite', epoch)
        gradient += clip_gradient
      weights = weights - config.learning_rate * gradient / len(batch)
      if not np.all(np.isfinite(weights)):
        raise sed_errors.TrainingError('weights diverged', epoch)
      model = model.with_weights(weights)

    epoch_loss = _mean_breakdown([
        loss_and_gradient(model, f, l, config, class_weights, t)[0]
        for f, l, t in zip(corpus.features, corpus.labels, targets)
    ])
    if not math.isfinite(epoch_loss.total):
      raise sed_errors.TrainingError('loss is not finite', epoch)
    trace.append(epoch_loss)
    if (epoch + 1) % 25 == 0 or epoch + 1 == config.epochs:
      sed_util.log_progress('epoch %d/%d: loss %.6f' %
                            (epoch + 1, config.epochs, epoch_loss.total))

  return TrainResult(model, trace)


def predict_corpus(model, corpus):
  """Returns {clip_id: ScoreTensor} for every clip of a corpus."""
  return {
      events.clip_id: predict(model, features, corpus.grid.frame_hop)
      for events, features in zip(corpus.events, corpus.features)
  }


class RunResult(
    collections.namedtuple('RunResult', [
        'arm', 'seed', 'event_f1', 'psds1', 'psds2', 'onset_error',
        'offset_error'
    ])):
  """Evaluation of one trained model."""
  __slots__ = ()


def train_and_evaluate(train_corpus, eval_corpus, config, eval_config, seed,
                       arm=''):
  """Train from seeded initial weights and evaluate on eval_corpus."""
  config = config._replace(seed=seed)
  model = init_model(train_corpus.vocab, train_corpus.features[0].shape[1],
                     config.context, seed)
  model = train(model, train_corpus, config).model
  scores = predict_corpus(model, eval_corpus)
  report = metrics.evaluate(eval_corpus.events, scores,
                            eval_config.postprocess, eval_config.f1,
                            eval_config.psds1, eval_config.psds2)
  errors = metrics.boundary_errors(
      eval_corpus.events, metrics.decode_scores(scores,
                                                eval_config.postprocess))
  sed_util.log_progress('%s seed %d: event-F1 %.4f' %
                        (arm or 'run', seed, report.event_f1))
  return RunResult(arm, seed, report.event_f1, report.psds1, report.psds2,
                   errors.onset_error, errors.offset_error)


class ArmSummary(
    collections.namedtuple('ArmSummary', [
        'arm', 'event_f1', 'psds1', 'psds2', 'onset_error', 'offset_error'
    ])):
  """Means over seeds of one arm's RunResults."""
  __slots__ = ()


SUMMARY_METRICS = ArmSummary._fields[1:]


class ComparisonReport(
    collections.namedtuple('ComparisonReport', ['runs', 'summaries',
                                                'gains'])):
  """Paired BCE / OWBCE results.

  Attributes:
    runs (list of RunResult): per arm and seed.
    summaries (list of ArmSummary): bce first, then owbce.
    gains (OrderedDict): metric -> relative change of owbce over bce in
      percent (NaN when the bce mean is 0).
  """
  __slots__ = ()


def summarize(arm, runs):
  values = [
      float(np.mean([getattr(r, field) for r in runs]))
      for field in SUMMARY_METRICS
  ]
  return ArmSummary(arm, *values)


def relative_gain(baseline, value):
  if baseline == 0 or math.isnan(baseline):
    return float('nan')
  return 100.0 * (value - baseline) / baseline


def compare_losses(train_corpus, eval_corpus, config, eval_config,
                   seeds=DEFAULT_SEEDS):
  """Train paired BCE and OWBCE models over the same seeds.

  The bce arm uses config with alpha = 0; the owbce arm uses config as is.

  Args:
    train_corpus: corpus to train on (e.g. with jittered labels).
    eval_corpus: corpus to evaluate on; its events are the references.
    config: (TrainConfig) shared settings.
    eval_config: (metrics.EvalConfig) evaluation settings.
    seeds: training seeds, shared by both arms.

  Returns:
    A ComparisonReport.
  """
  arm_configs = collections.OrderedDict([
      ('bce', config._replace(
          window=weighting.WindowParams(0.0, config.window.sigma))),
      ('owbce', config),
  ])
  jobs = [(arm, seed) for arm in arm_configs for seed in seeds]
  runs = sed_util.parallel_map(
      lambda job: train_and_evaluate(train_corpus, eval_corpus,
                                     arm_configs[job[0]], eval_config,
                                     job[1], arm=job[0]), jobs)
  summaries = [
      summarize(arm, [r for r in runs if r.arm == arm]) for arm in arm_configs
  ]
  bce, owbce = summaries
  gains = collections.OrderedDict(
      (field, relative_gain(getattr(bce, field), getattr(owbce, field)))
      for field in SUMMARY_METRICS)
  return ComparisonReport(runs, summaries, gains)


def format_model_file(model):
  header = 'context=%d feature_dim=%d classes=%s' % (
      model.context, model.feature_dim, ','.join(model.vocab.names))
  lines = [header] + [_WEIGHT_FORMAT % w for w in model.weights.ravel()]
  return '\n'.join(lines) + '\n'


def write_model_file(model, path):
  sed_util.write_file(path, format_model_file(model))


def read_model_file(path):
  """Parse a model file written by write_model_file.

  Raises:
    ParseError: on a malformed header or weight line, or a wrong number of
      weights.
  """
  lines = sed_util.load_file(path).splitlines()
  if not lines:
    raise sed_errors.ParseError('empty model file', path)
  try:
    header = dict(field.split('=', 1) for field in lines[0].split())
    context = int(header['context'])
    feature_dim = int(header['feature_dim'])
    names = header['classes'].split(',')
  except (KeyError, ValueError):
    raise sed_errors.ParseError(
        'expected "context=C feature_dim=D classes=a,b,..." header, got %r' %
        lines[0], path, 1) from None
  vocab = frame_model.ClassVocabulary(names)
  values = []
  for line_num, line in enumerate(lines[1:], start=2):
    try:
      values.append(float(line))
    except ValueError:
      raise sed_errors.ParseError('invalid weight %r' % line, path,
                                  line_num) from None
  expected = num_inputs(context, feature_dim) * len(vocab)
  if len(values) != expected:
    raise sed_errors.ParseError(
        'expected %d weights, got %d' % (expected, len(values)), path)
  weights = np.array(values).reshape(num_inputs(context, feature_dim),
                                     len(vocab))
  return LinearFrameModel(vocab, context, feature_dim, weights)
