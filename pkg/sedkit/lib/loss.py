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
"""Frame-level BCE, weighted aggregation and the composite training loss.

The strong loss averages an elementwise loss over frames and classes,

  L = 1 / (N * K) * sum_n sum_k mask(n, k) * w(k) * f(n, k)

where the weight mask and class weights are optional. The composite
training loss is L_strong + w_weak * L_weak + w_cons * L_cons; only the
strong term is weighted by the onset/offset mask.

Reductions use math.fsum so that results do not depend on summation order.
"""

import collections
import math

from . import frame_model
from . import sed_errors
from . import weighting
import numpy as np

# Scores are clipped to [EPSILON, 1 - EPSILON] before taking logarithms.
EPSILON = 1e-7


class CombinerWeights(
    collections.namedtuple('CombinerWeights', ['w_weak', 'w_cons'])):
  """Weights of the weak and consistency terms of the training loss."""
  __slots__ = ()

  def __new__(cls, w_weak=0.0, w_cons=0.0):
    w_weak = float(w_weak)
    w_cons = float(w_cons)
    for key, value in (('w_weak', w_weak), ('w_cons', w_cons)):
      if not math.isfinite(value) or value < 0:
        raise sed_errors.ConfigError(key, 'must be >= 0, got %r' % value)
    return super(CombinerWeights, cls).__new__(cls, w_weak, w_cons)


class LossBreakdown(
    collections.namedtuple('LossBreakdown',
                           ['strong', 'weak', 'consistency', 'total'])):
  """The three loss terms and their weighted total."""
  __slots__ = ()


def _sum(values):
  return math.fsum(np.ravel(values).tolist())


def clip_scores(scores):
  return np.clip(scores, EPSILON, 1.0 - EPSILON)


def bce_values(targets, scores):
  """Elementwise BCE on arrays; soft targets are allowed."""
  scores = clip_scores(np.asarray(scores, dtype=np.float64))
  targets = np.asarray(targets, dtype=np.float64)
  return -(targets * np.log(scores) + (1.0 - targets) * np.log1p(-scores))


def bce_elementwise(labels, scores):
  """Elementwise binary cross-entropy f(y, y_hat).

  Args:
    labels: (LabelTensor) ground truth.
    scores: (ScoreTensor) model outputs, clipped to [EPSILON, 1 - EPSILON].

  Returns:
    numpy array of shape (N, K) with non-negative losses.

  Raises:
    DimensionError: if the tensors do not share frames and classes.
  """
  frame_model.check_compatible(labels, scores)
  return bce_values(labels.values, scores.values)


def _as_array(weights):
  if weights is None:
    return None
  if isinstance(weights, frame_model.FrameTensor):
    return weights.values
  return np.asarray(weights, dtype=np.float64)


def aggregate_loss(elementwise, mask=None, class_weights=None):
  """Average an elementwise loss over frames and classes.

  Args:
    elementwise: N x K array of elementwise losses.
    mask: optional WeightMask (or N x K array) of per-frame weights.
    class_weights: optional sequence of K class weights.

  Returns:
    The weighted average as a float; with no weights this is the plain
    mean over frames and classes.

  Raises:
    DimensionError: if the weights do not match the loss shape.
  """
  elementwise = np.asarray(elementwise, dtype=np.float64)
  if elementwise.ndim != 2:
    raise sed_errors.DimensionError('Elementwise loss must be N x K')
  weighted = elementwise
  mask = _as_array(mask)
  if mask is not None:
    if mask.shape != elementwise.shape:
      raise sed_errors.DimensionError(
          'Mask shape %s does not match loss shape %s' %
          (mask.shape, elementwise.shape))
    weighted = weighted * mask
  class_weights = _as_array(class_weights)
  if class_weights is not None:
    if class_weights.shape != (elementwise.shape[1],):
      raise sed_errors.DimensionError(
          'Expected %d class weights, got %s' %
          (elementwise.shape[1], class_weights.shape))
    weighted = weighted * class_weights[np.newaxis, :]
  return _sum(weighted) / elementwise.size


def owbce_loss(labels, scores, params, class_weights=None):
  """Onset/offset weighted BCE: BCE weighted by build_weight_mask(labels).

  Equals the unweighted BCE average when params.alpha or params.sigma is 0.
  """
  mask = weighting.build_weight_mask(labels, params)
  return aggregate_loss(
      bce_elementwise(labels, scores), mask, class_weights=class_weights)


def bce_gradient_values(targets, scores, weights):
  """d/d(score) of the weighted mean BCE, on arrays."""
  clipped = clip_scores(np.asarray(scores, dtype=np.float64))
  targets = np.asarray(targets, dtype=np.float64)
  return (weights * (clipped - targets) / (clipped * (1.0 - clipped)) /
          targets.size)


def owbce_gradient(labels, scores, params, class_weights=None):
  """Analytic gradient of owbce_loss with respect to the scores.

  Returns:
    numpy array of shape (N, K):
    mask * (y_hat - y) / (y_hat * (1 - y_hat)) / (N * K).
  """
  frame_model.check_compatible(labels, scores)
  weights = weighting.build_weight_mask(labels, params).values
  if class_weights is not None:
    weights = weights * np.asarray(class_weights)[np.newaxis, :]
  return bce_gradient_values(labels.values, scores.values, weights)


def _clip_label_vector(clip_labels, scores):
  clip_labels = np.asarray(clip_labels, dtype=np.float64)
  if clip_labels.shape != (scores.num_classes,):
    raise sed_errors.DimensionError(
        'Expected %d clip labels, got shape %s' %
        (scores.num_classes, clip_labels.shape))
  if clip_labels.size and (clip_labels.min() < 0 or clip_labels.max() > 1):
    raise sed_errors.ValidationError('Clip labels must be in [0, 1]')
  return clip_labels


def weak_loss(clip_labels, scores):
  """BCE between clip-level labels and max-pooled frame scores.

  Args:
    clip_labels: K clip-level labels in [0, 1].
    scores: (ScoreTensor) frame scores, pooled by the maximum over frames.

  Returns:
    The mean over classes of BCE(clip label, pooled score).
  """
  clip_labels = _clip_label_vector(clip_labels, scores)
  pooled = scores.values.max(axis=0)
  return _sum(bce_values(clip_labels, pooled)) / scores.num_classes


def weak_gradient(clip_labels, scores):
  """Gradient of weak_loss with respect to the frame scores.

  Only the first frame attaining the per-class maximum receives gradient.
  """
  clip_labels = _clip_label_vector(clip_labels, scores)
  peak_frames = scores.values.argmax(axis=0)
  columns = np.arange(scores.num_classes)
  pooled = scores.values[peak_frames, columns]
  gradient = np.zeros_like(scores.values)
  gradient[peak_frames, columns] = bce_gradient_values(
      clip_labels, pooled, np.ones(scores.num_classes))
  return gradient


def consistency_loss(scores, target):
  """Mean squared difference between two score tensors."""
  frame_model.check_compatible(scores, target)
  difference = scores.values - target.values
  return _sum(difference * difference) / difference.size


def consistency_gradient(scores, target):
  """Gradient of consistency_loss with respect to scores."""
  frame_model.check_compatible(scores, target)
  difference = scores.values - target.values
  return 2.0 * difference / difference.size


def combine_losses(strong, weak, cons, weights):
  """Combine the loss terms: strong + w_weak * weak + w_cons * cons.

  Callers pass the (onset/offset weighted) strong term and unweighted weak
  and consistency terms.

  Returns:
    A LossBreakdown.
  """
  for name, value in (('strong', strong), ('weak', weak), ('consistency',
                                                           cons)):
    if not math.isfinite(value):
      raise sed_errors.ValidationError('%s loss is not finite' % name)
  total = strong + weights.w_weak * weak + weights.w_cons * cons
  return LossBreakdown(strong, weak, cons, total)
