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
"""Class definitions for the sedkit frame-level data model.

The sedkit object model is built around a frame grid and a class vocabulary.

A clip is described by:
- a FrameGrid: number of frames N and the frame hop in seconds.
- a ClassVocabulary: the K class names, in the canonical column order of
  every tensor.

N x K tensors on that grid:
- LabelTensor: ground-truth activities in [0, 1].
- ScoreTensor: model outputs in [0, 1].
- (weighting.BoundaryImpulse and weighting.WeightMask build on FrameTensor.)

Events:
- Event: (class_name, onset, offset) in seconds.
- EventList: the events of one clip, identified by clip_id.

All types are immutable after construction (tensor values are read-only
numpy arrays), so the conversions in this module are safe to call from
multiple threads.
"""

import collections
import math

from . import sed_errors
import numpy as np

# Tolerance used when comparing times computed from frame indices.
TIME_EPSILON = 1e-9

# Decimal places kept for times derived from frame indices.
_TIME_DECIMALS = 9


def round_time(seconds):
  """Round a frame-derived time so that e.g. 3 * 0.064 reads as 0.192."""
  return round(float(seconds), _TIME_DECIMALS)


class FrameGrid(collections.namedtuple('FrameGrid', ['num_frames',
                                                     'frame_hop'])):
  """The time grid of a clip.

  Attributes:
    num_frames (int): number of frames N, at least 1.
    frame_hop (float): seconds per frame, positive.
  """
  __slots__ = ()

  def __new__(cls, num_frames, frame_hop):
    if isinstance(num_frames, float) and not num_frames.is_integer():
      raise sed_errors.ValidationError(
          'num_frames must be an integer, got %r' % num_frames)
    num_frames = int(num_frames)
    frame_hop = float(frame_hop)
    if num_frames < 1:
      raise sed_errors.ValidationError(
          'num_frames must be >= 1, got %d' % num_frames)
    if not frame_hop > 0 or not math.isfinite(frame_hop):
      raise sed_errors.ValidationError(
          'frame_hop must be > 0, got %r' % frame_hop)
    return super(FrameGrid, cls).__new__(cls, num_frames, frame_hop)

  @property
  def duration(self):
    return self.num_frames * self.frame_hop

  def frame_to_time(self, frame):
    return round_time(frame * self.frame_hop)

  @classmethod
  def for_duration(cls, duration, frame_hop):
    """Returns the smallest grid covering duration seconds."""
    num_frames = int(math.ceil(duration / frame_hop - TIME_EPSILON))
    return cls(max(num_frames, 1), frame_hop)


class ClassVocabulary(object):
  """Ordered list of K distinct class labels.

  Attributes:
    names: (tuple of str) the canonical column order of all tensors.
  """
  __slots__ = ('names', '_index')

  def __init__(self, names):
    names = tuple(names)
    if not names:
      raise sed_errors.VocabularyError('Class vocabulary must not be empty')
    for name in names:
      if not isinstance(name, str) or not name:
        raise sed_errors.VocabularyError('Invalid class name: %r' % (name,))
    duplicates = sorted(
        name for name, count in collections.Counter(names).items()
        if count > 1)
    if duplicates:
      raise sed_errors.VocabularyError('Duplicate class names: %s' %
                                       ', '.join(duplicates))
    self.names = names
    self._index = {name: i for i, name in enumerate(names)}

  def __len__(self):
    return len(self.names)

  def __iter__(self):
    return iter(self.names)

  def __contains__(self, name):
    return name in self._index

  def __eq__(self, other):
    return isinstance(other, ClassVocabulary) and self.names == other.names

  def __ne__(self, other):
    return not self == other

  def __hash__(self):
    return hash(self.names)

  def __repr__(self):
    return 'ClassVocabulary(%r)' % (list(self.names),)

  def index_of(self, name):
    """Returns the column index of a class name."""
    try:
      return self._index[name]
    except KeyError:
      raise sed_errors.VocabularyError(
          'Unknown class name: %r (vocabulary: %s)' %
          (name, ', '.join(self.names))) from None


class FrameTensor(object):
  """An immutable N x K matrix of per-frame, per-class values.

  Subclasses restrict the value range through _validate_values.

  Attributes:
    grid: (FrameGrid) the frame grid, N = grid.num_frames.
    vocab: (ClassVocabulary) the K column classes.
    values: (numpy.ndarray) read-only float64 array of shape (N, K).
  """

  def __init__(self, grid, vocab, values):
    values = np.array(values, dtype=np.float64)
    expected = (grid.num_frames, len(vocab))
    if values.shape != expected:
      raise sed_errors.DimensionError(
          '%s values have shape %s, expected %s' %
          (type(self).__name__, values.shape, expected))
    if not np.all(np.isfinite(values)):
      raise sed_errors.ValidationError('%s values must be finite' %
                                       type(self).__name__)
    self.grid = grid
    self.vocab = vocab
    self._validate_values(values)
    values.setflags(write=False)
    self.values = values

  def _validate_values(self, values):
    pass

  def _check_unit_range(self, values):
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
      bad = np.argwhere((values < 0.0) | (values > 1.0))[0]
      raise sed_errors.ValidationError(
          '%s value %r at frame %d, class %s is outside [0, 1]' %
          (type(self).__name__, float(values[bad[0], bad[1]]), bad[0],
           self.vocab.names[bad[1]]))

  @property
  def num_frames(self):
    return self.grid.num_frames

  @property
  def num_classes(self):
    return len(self.vocab)

  def column(self, name):
    return self.values[:, self.vocab.index_of(name)]

  def __repr__(self):
    return '%s(num_frames=%d, classes=%r)' % (type(self).__name__,
                                              self.num_frames,
                                              list(self.vocab.names))


class LabelTensor(FrameTensor):
  """Frame-level ground truth y_k(n); hard labels are the subset {0, 1}."""

  def _validate_values(self, values):
    self._check_unit_range(values)

  def is_binary(self):
    return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


class ScoreTensor(FrameTensor):
  """Frame-level model outputs in [0, 1]."""

  def _validate_values(self, values):
    self._check_unit_range(values)


def check_compatible(first, second):
  """Raise DimensionError unless two tensors share frame count and classes."""
  if first.num_frames != second.num_frames:
    raise sed_errors.DimensionError(
        'Frame count mismatch: %d vs %d' %
        (first.num_frames, second.num_frames))
  if first.vocab != second.vocab:
    raise sed_errors.DimensionError(
        'Class vocabulary mismatch: %s vs %s' %
        (list(first.vocab.names), list(second.vocab.names)))


class Event(collections.namedtuple('Event',
                                   ['class_name', 'onset', 'offset'])):
  """A sound event.

  Attributes:
    class_name (str): label from the class vocabulary.
    onset (float): start time in seconds, >= 0.
    offset (float): end time in seconds, > onset.
  """
  __slots__ = ()

  def __new__(cls, class_name, onset, offset):
    onset = float(onset)
    offset = float(offset)
    if not isinstance(class_name, str) or not class_name:
      raise sed_errors.ValidationError('Invalid event label: %r' %
                                       (class_name,))
    if not (math.isfinite(onset) and math.isfinite(offset)):
      raise sed_errors.ValidationError('Event times must be finite')
    if onset < 0:
      raise sed_errors.ValidationError('Event onset %r is negative' % onset)
    if onset >= offset:
      raise sed_errors.ValidationError(
          'Event onset %r must be before offset %r' % (onset, offset))
    return super(Event, cls).__new__(cls, class_name, onset, offset)

  @property
  def duration(self):
    return self.offset - self.onset


class EventList(collections.namedtuple('EventList', ['clip_id', 'events'])):
  """The events of one clip, sorted by (class_name, onset).

  Attributes:
    clip_id (str): clip identifier (the "filename" column of event files).
    events (tuple of Event): the events, sorted.
  """
  __slots__ = ()

  def __new__(cls, clip_id, events=()):
    events = tuple(sorted(events, key=lambda e: (e.class_name, e.onset,
                                                 e.offset)))
    return super(EventList, cls).__new__(cls, clip_id, events)

  def class_names(self):
    return sorted(set(e.class_name for e in self.events))

  def for_class(self, class_name):
    return [e for e in self.events if e.class_name == class_name]


def events_to_labels(events, grid, vocab):
  """Rasterize the events of one clip onto a frame grid.

  Frame n of class k is active iff [n * hop, (n + 1) * hop) overlaps some
  event of class k by at least half a frame. Offsets past the end of the
  clip are clipped.

  Args:
    events: (EventList) the events of one clip.
    grid: (FrameGrid) the target grid.
    vocab: (ClassVocabulary) the column classes.

  Returns:
    A LabelTensor with values in {0, 1}.

  Raises:
    VocabularyError: if an event names a class missing from vocab.
  """
  values = np.zeros((grid.num_frames, len(vocab)), dtype=np.float64)
  frame_starts = np.arange(grid.num_frames) * grid.frame_hop
  frame_ends = frame_starts + grid.frame_hop
  half_frame = grid.frame_hop / 2.0
  for event in events.events:
    k = vocab.index_of(event.class_name)
    overlap = (np.minimum(frame_ends, event.offset) -
               np.maximum(frame_starts, event.onset))
    values[overlap >= half_frame - TIME_EPSILON, k] = 1.0
  return LabelTensor(grid, vocab, values)


def active_runs(column):
  """Returns (start, end) frame pairs, end exclusive, of nonzero runs."""
  active = np.concatenate(([0], (np.asarray(column) != 0).astype(np.int8),
                           [0]))
  edges = np.diff(active)
  starts = np.flatnonzero(edges == 1)
  ends = np.flatnonzero(edges == -1)
  return list(zip(starts.tolist(), ends.tolist()))


def labels_to_events(labels, clip_id='', binarize=False):
  """Decode frame labels into events.

  Each maximal run of consecutive active frames of one class becomes one
  Event with onset = first_frame * hop and offset = (last_frame + 1) * hop.

  Args:
    labels: (LabelTensor) frame labels.
    clip_id: (str) identifier for the returned EventList.
    binarize: (bool) threshold the labels with "> 0.5" first; otherwise the
      labels must already be in {0, 1}.

  Returns:
    An EventList.

  Raises:
    ValidationError: if binarize is False and the labels are not binary.
  """
  values = labels.values
  if binarize:
    values = (values > 0.5).astype(np.float64)
  elif not labels.is_binary():
    raise sed_errors.ValidationError(
        'labels_to_events requires binary labels; pass binarize=True to '
        'threshold soft labels')
  events = []
  for k, class_name in enumerate(labels.vocab):
    for start, end in active_runs(values[:, k]):
      events.append(
          Event(class_name, labels.grid.frame_to_time(start),
                labels.grid.frame_to_time(end)))
  return EventList(clip_id, events)
