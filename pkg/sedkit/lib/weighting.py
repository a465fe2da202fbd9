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
"""Loss weightings: the onset/offset weight mask and class weight vectors.

The onset/offset weight mask is built per clip from its labels in two steps:

  1. Boundary impulses o_k(n) = |y_k(n) - y_k(n - 1)|, with y_k(-1) = 0.
     Soft labels keep their amplitude.
  2. mask_k = 1 + (o_k convolved with a sin window of height alpha and
     width sigma), centered on the impulse, zero padded at the clip edges.

With alpha = 0 or sigma = 0 the mask is all ones and the weighted loss is
plain BCE.

Class weight vectors counter class imbalance along the class dimension:
  count_class_weights: softmax of 1 / M_k (sums to 1).
  effective_number_weights: (1 - beta) / (1 - beta ** floor(lambda * r)),
    normalized to sum to K.
"""

import collections
import math
import numbers

from . import frame_model
from . import sed_errors
import numpy as np

DEFAULT_ALPHA = 12.0
DEFAULT_SIGMA = 7
DEFAULT_LAMBDA = 10.0

CLASS_WEIGHTING_SCHEMES = ('none', 'count', 'effective')


class WindowParams(collections.namedtuple('WindowParams', ['alpha',
                                                           'sigma'])):
  """Height and width of the sin window.

  Attributes:
    alpha (float): window height, >= 0.
    sigma (int): window width in frames, >= 0 and odd when > 0.
  """
  __slots__ = ()

  def __new__(cls, alpha=DEFAULT_ALPHA, sigma=DEFAULT_SIGMA):
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha < 0:
      raise sed_errors.ConfigError('alpha', 'must be >= 0, got %r' % alpha)
    if isinstance(sigma, float) and sigma.is_integer():
      sigma = int(sigma)
    if not isinstance(sigma, numbers.Integral) or isinstance(sigma, bool):
      raise sed_errors.ConfigError('sigma',
                                   'must be an integer, got %r' % (sigma,))
    sigma = int(sigma)
    if sigma < 0:
      raise sed_errors.ConfigError('sigma', 'must be >= 0, got %d' % sigma)
    if sigma > 0 and sigma % 2 == 0:
      raise sed_errors.ConfigError('sigma',
                                   'must be odd when > 0, got %d' % sigma)
    return super(WindowParams, cls).__new__(cls, alpha, sigma)

  @property
  def half_width(self):
    """Frames on each side of the center tap."""
    return (self.sigma - 1) // 2 if self.sigma else 0

  def is_identity(self):
    return self.alpha == 0 or self.sigma == 0


class BoundaryImpulse(frame_model.FrameTensor):
  """Boundary impulses o_k(n) >= 0, nonzero only at label transitions."""

  def _validate_values(self, values):
    if values.size and values.min() < 0:
      raise sed_errors.ValidationError('Boundary impulses must be >= 0')


class WeightMask(frame_model.FrameTensor):
  """Multiplicative per-frame, per-class loss weights (>= 0)."""

  def _validate_values(self, values):
    if values.size and values.min() < 0:
      raise sed_errors.ValidationError('Weight mask values must be >= 0')


class ClassStats(
    collections.namedtuple('ClassStats',
                           ['vocab', 'event_counts', 'frame_counts'])):
  """Per-class event counts M_k and active frame counts N_k.

  Attributes:
    vocab (ClassVocabulary): the K classes.
    event_counts (tuple of int): M_k.
    frame_counts (tuple of int): N_k.
  """
  __slots__ = ()

  def __new__(cls, vocab, event_counts, frame_counts):
    event_counts = tuple(int(m) for m in event_counts)
    frame_counts = tuple(int(n) for n in frame_counts)
    if len(event_counts) != len(vocab) or len(frame_counts) != len(vocab):
      raise sed_errors.DimensionError(
          'ClassStats needs %d event and frame counts' % len(vocab))
    if min(event_counts + frame_counts) < 0:
      raise sed_errors.ValidationError('Class counts must be >= 0')
    return super(ClassStats, cls).__new__(cls, vocab, event_counts,
                                          frame_counts)


def detect_boundaries(labels):
  """Locate onsets and offsets with a first-order difference.

  Args:
    labels: (LabelTensor) frame labels; soft labels keep their amplitude.

  Returns:
    A BoundaryImpulse tensor. The label sequence is padded with a zero on
    the left only, so an event running to the final frame has no offset
    impulse.
  """
  values = labels.values
  previous = np.vstack((np.zeros((1, values.shape[1])), values[:-1]))
  return BoundaryImpulse(labels.grid, labels.vocab, np.abs(values - previous))


def sin_window(params):
  """Returns the sigma taps alpha * sin(pi * (i + 1) / (sigma + 1))."""
  taps = np.arange(params.sigma, dtype=np.float64)
  return params.alpha * np.sin(np.pi * (taps + 1) / (params.sigma + 1))


def build_weight_mask(labels, params):
  """Build the onset/offset weight mask for one clip.

  Args:
    labels: (LabelTensor) frame labels.
    params: (WindowParams) window height and width.

  Returns:
    A WeightMask: 1 plus the boundary impulses convolved with the sin
    window. Overlapping window contributions add up.
  """
  num_frames = labels.num_frames
  if params.is_identity():
    return WeightMask(labels.grid, labels.vocab,
                      np.ones((num_frames, labels.num_classes)))

  impulses = detect_boundaries(labels).values
  window = sin_window(params)
  center = params.half_width
  mask = np.ones_like(impulses)
  for k in range(impulses.shape[1]):
    if not impulses[:, k].any():
      continue
    # The full convolution has length N + sigma - 1; the centered slice
    # aligns the center tap with each impulse.
    full = np.convolve(impulses[:, k], window)
    mask[:, k] += full[center:center + num_frames]
  return WeightMask(labels.grid, labels.vocab, mask)


def _require_positive(counts, name, vocab):
  for class_name, count in zip(vocab, counts):
    if count < 1:
      raise sed_errors.UndefinedStatisticError(
          '%s is %d for class %s; the weighting is undefined' %
          (name, count, class_name))


def count_class_weights(stats):
  """Class weights exp(1 / M_k) / sum_j exp(1 / M_j).

  Args:
    stats: (ClassStats) per-class statistics.

  Returns:
    numpy array of K weights summing to 1.

  Raises:
    UndefinedStatisticError: if any M_k is 0.
  """
  _require_positive(stats.event_counts, 'event count', stats.vocab)
  inverse = 1.0 / np.array(stats.event_counts, dtype=np.float64)
  # Shifting by the maximum keeps equal counts exactly uniform.
  exponentials = np.exp(inverse - inverse.max())
  return exponentials / math.fsum(exponentials)


def effective_number_weights(stats, lam=DEFAULT_LAMBDA):
  """Effective-number class weights combining event counts and durations.

  beta(k) = (M_k - 1) / M_k, r(k) = N_k / sum_j N_j, and the unnormalized
  weight is (1 - beta) / (1 - beta ** e) with e = max(1, floor(lam * r)).

  Args:
    stats: (ClassStats) per-class statistics.
    lam: (float) positive scale of the duration ratio.

  Returns:
    numpy array of K weights summing to K.

  Raises:
    UndefinedStatisticError: if any M_k or N_k is 0.
    ConfigError: if lam is not positive.
  """
  if not lam > 0:
    raise sed_errors.ConfigError('lambda', 'must be > 0, got %r' % lam)
  _require_positive(stats.event_counts, 'event count', stats.vocab)
  _require_positive(stats.frame_counts, 'frame count', stats.vocab)

  total_frames = sum(stats.frame_counts)
  unnormalized = []
  for m, n in zip(stats.event_counts, stats.frame_counts):
    beta = (m - 1) / m
    exponent = max(1, int(math.floor(lam * n / total_frames)))
    unnormalized.append((1.0 - beta) / (1.0 - beta**exponent))
  unnormalized = np.array(unnormalized, dtype=np.float64)
  return len(unnormalized) * unnormalized / math.fsum(unnormalized)


def class_weight_vector(stats, scheme, lam=DEFAULT_LAMBDA):
  """Returns the K class weights of a scheme, normalized to sum to K.

  Args:
    stats: (ClassStats) per-class statistics.
    scheme: one of 'none', 'count', 'effective'.
    lam: lambda for the 'effective' scheme.
  """
  num_classes = len(stats.vocab)
  if scheme == 'none':
    return np.ones(num_classes)
  elif scheme == 'count':
    return num_classes * count_class_weights(stats)
  elif scheme == 'effective':
    return effective_number_weights(stats, lam)
  else:
    raise sed_errors.ConfigError(
        'class_weighting', 'unknown scheme %r (choose from %s)' %
        (scheme, ', '.join(CLASS_WEIGHTING_SCHEMES)))


def collect_class_stats(corpus, vocab, grid=None):
  """Count events and active frames per class over a corpus.

  An event is a maximal run of frames with nonzero activity; N_k counts
  the frames with nonzero activity.

  Args:
    corpus: list of LabelTensor, or list of EventList.
    vocab: (ClassVocabulary) the classes to count.
    grid: (FrameGrid) used to rasterize EventLists; required for them.

  Returns:
    A ClassStats.

  Raises:
    DimensionError: if a LabelTensor has a different vocabulary.
  """
  event_counts = np.zeros(len(vocab), dtype=np.int64)
  frame_counts = np.zeros(len(vocab), dtype=np.int64)
  for item in corpus:
    if isinstance(item, frame_model.EventList):
      if grid is None:
        raise sed_errors.ValidationError(
            'A frame grid is required to count frames of event lists')
      item = frame_model.events_to_labels(item, grid, vocab)
    elif item.vocab != vocab:
      raise sed_errors.DimensionError(
          'Class vocabulary mismatch: %s vs %s' %
          (list(item.vocab.names), list(vocab.names)))
    for k in range(len(vocab)):
      column = item.values[:, k]
      event_counts[k] += len(frame_model.active_runs(column))
      frame_counts[k] += int(np.count_nonzero(column))
  return ClassStats(vocab, event_counts.tolist(), frame_counts.tolist())
