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
"""Binarization and median filtering of frame decisions.

Scores are binarized per class with a strict "score > threshold" rule and
then median filtered per class with an odd window length, zero padded at
both ends. On binary sequences the median is a majority vote, which removes
runs of ones shorter than about half the window and fills gaps of similar
length; near event boundaries it can also move the decoded onset or offset.
"""

import collections
import math
import numbers

from . import frame_model
from . import sed_errors
import numpy as np
import scipy.ndimage

DEFAULT_THRESHOLD = 0.5
DEFAULT_FILTER_FRAMES = 7


class PostprocessConfig(
    collections.namedtuple('PostprocessConfig',
                           ['thresholds', 'filter_lengths'])):
  """Per-class decision thresholds and median filter lengths.

  Attributes:
    thresholds (tuple of float): K thresholds in (0, 1).
    filter_lengths (tuple of int): K odd filter lengths in frames, >= 1.
  """
  __slots__ = ()

  def __new__(cls, thresholds, filter_lengths):
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) != len(filter_lengths):
      raise sed_errors.DimensionError(
          'Got %d thresholds but %d filter lengths' %
          (len(thresholds), len(filter_lengths)))
    for threshold in thresholds:
      if not 0.0 < threshold < 1.0:
        raise sed_errors.ConfigError('threshold',
                                     'must be in (0, 1), got %r' % threshold)
    lengths = []
    for length in filter_lengths:
      if isinstance(length, float) and length.is_integer():
        length = int(length)
      if (not isinstance(length, numbers.Integral) or isinstance(length, bool)
          or length < 1 or length % 2 == 0):
        raise sed_errors.ConfigError(
            'medfilt_frames', 'must be an odd integer >= 1, got %r' %
            (length,))
      lengths.append(int(length))
    return super(PostprocessConfig, cls).__new__(cls, thresholds,
                                                 tuple(lengths))

  @classmethod
  def uniform(cls, num_classes, threshold=DEFAULT_THRESHOLD,
              filter_length=DEFAULT_FILTER_FRAMES):
    return cls([threshold] * num_classes, [filter_length] * num_classes)

  def with_threshold(self, threshold):
    """Returns a copy with every class threshold set to threshold."""
    return PostprocessConfig([threshold] * len(self.thresholds),
                             self.filter_lengths)


def filter_length_from_seconds(seconds, grid):
  """Convert a filter duration to an odd number of frames (at least 1)."""
  if not math.isfinite(seconds) or seconds < 0:
    raise sed_errors.ConfigError('medfilt_seconds',
                                 'must be >= 0, got %r' % seconds)
  frames = max(1, int(round(seconds / grid.frame_hop)))
  if frames % 2 == 0:
    frames += 1
  return frames


def filter_lengths_from_seconds(seconds, grid):
  return [filter_length_from_seconds(s, grid) for s in seconds]


def _check_classes(tensor, config):
  if tensor.num_classes != len(config.thresholds):
    raise sed_errors.DimensionError(
        'Postprocess config has %d classes, tensor has %d' %
        (len(config.thresholds), tensor.num_classes))


def binarize(scores, config):
  """Returns a LabelTensor with 1 where score > threshold (strict)."""
  _check_classes(scores, config)
  thresholds = np.array(config.thresholds)[np.newaxis, :]
  return frame_model.LabelTensor(scores.grid, scores.vocab,
                                 (scores.values > thresholds).astype(
                                     np.float64))


def median_filter(binary, config):
  """Per-class sliding median with zero padding at both ends.

  Args:
    binary: (LabelTensor) values in {0, 1}.
    config: (PostprocessConfig) per-class odd filter lengths.

  Returns:
    A filtered LabelTensor; a length of 1 leaves a column unchanged.
  """
  _check_classes(binary, config)
  if not binary.is_binary():
    raise sed_errors.ValidationError('median_filter requires binary input')
  filtered = np.array(binary.values)
  for k, length in enumerate(config.filter_lengths):
    if length == 1:
      continue
    filtered[:, k] = scipy.ndimage.median_filter(
        binary.values[:, k], size=length, mode='constant', cval=0.0)
  return frame_model.LabelTensor(binary.grid, binary.vocab, filtered)


def postprocess_pipeline(scores, config, clip_id=''):
  """binarize -> median_filter -> labels_to_events for one clip."""
  filtered = median_filter(binarize(scores, config), config)
  return frame_model.labels_to_events(filtered, clip_id=clip_id)
