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
"""Synthetic sound event corpora with boundary ambiguity and label noise.

A corpus is a set of equal-length clips. Each clip receives a Poisson number
of events with a uniformly drawn class, duration and onset; a placement that
would overlap (or touch) an event of the same class is rejected and redrawn.
Frame features are the sum of the active classes' embeddings plus Gaussian
noise. With boundary_blur_frames B > 0 the class activity fed to the
features is a (2B + 1)-frame moving average of the labels, so frames near an
onset or offset are linearly interpolated toward the background.
"""

import collections
import math

from . import frame_model
from . import sed_errors
import numpy as np
import scipy.ndimage
import scipy.stats
import tenacity

DEFAULT_FRAME_HOP = 0.064
DEFAULT_FEATURE_DIM = 16

# Norm of each class embedding.
EMBEDDING_SCALE = 2.0

# Placement attempts per event before generation is declared infeasible.
MAX_PLACEMENT_ATTEMPTS = 100

# Jitter never shrinks an event below this many seconds.
MIN_JITTERED_DURATION = 0.001


class SynthConfig(
    collections.namedtuple('SynthConfig', [
        'num_clips', 'clip_frames', 'num_classes', 'event_rate',
        'duration_range', 'score_noise_std', 'boundary_blur_frames',
        'annotation_jitter_std', 'rng_seed', 'feature_dim', 'frame_hop'
    ])):
  """Parameters of a synthetic corpus.

  Attributes:
    num_clips (int): number of clips, > 0.
    clip_frames (int): frames per clip, > 0.
    num_classes (int): K, > 0 and <= feature_dim.
    event_rate (float): mean number of events per clip, >= 0.
    duration_range (tuple of int): (min, max) event duration in frames.
    score_noise_std (float): std of the Gaussian feature noise, >= 0.
    boundary_blur_frames (int): B, >= 0.
    annotation_jitter_std (float): seconds, >= 0; applied by
      jittered_corpus, not by generate_corpus.
    rng_seed (int): seed for numpy's default generator.
    feature_dim (int): D.
    frame_hop (float): seconds per frame.
  """
  __slots__ = ()

  def __new__(cls,
              num_clips=40,
              clip_frames=156,
              num_classes=3,
              event_rate=2.0,
              duration_range=(4, 30),
              score_noise_std=0.5,
              boundary_blur_frames=2,
              annotation_jitter_std=0.0,
              rng_seed=0,
              feature_dim=DEFAULT_FEATURE_DIM,
              frame_hop=DEFAULT_FRAME_HOP):
    for key, value in (('synth.num_clips', num_clips),
                       ('synth.clip_frames', clip_frames),
                       ('synth.num_classes', num_classes),
                       ('synth.feature_dim', feature_dim)):
      if int(value) != value or value < 1:
        raise sed_errors.ConfigError(key,
                                     'must be a positive integer, got %r' %
                                     value)
    if num_classes > feature_dim:
      raise sed_errors.ConfigError(
          'synth.num_classes', 'must be <= synth.feature_dim (%d), got %d' %
          (feature_dim, num_classes))
    min_frames, max_frames = duration_range
    if int(min_frames) != min_frames or int(max_frames) != max_frames:
      raise sed_errors.ConfigError('synth.min_duration',
                                   'durations must be whole frames')
    if min_frames < 1:
      raise sed_errors.ConfigError('synth.min_duration',
                                   'must be >= 1, got %r' % min_frames)
    if max_frames < min_frames or max_frames > clip_frames:
      raise sed_errors.ConfigError(
          'synth.max_duration',
          'must be in [%d, %d], got %r' % (min_frames, clip_frames,
                                           max_frames))
    for key, value in (('synth.event_rate', event_rate),
                       ('synth.score_noise_std', score_noise_std),
                       ('synth.annotation_jitter_std', annotation_jitter_std)):
      if not math.isfinite(value) or value < 0:
        raise sed_errors.ConfigError(key, 'must be >= 0, got %r' % value)
    if int(boundary_blur_frames) != boundary_blur_frames or (
        boundary_blur_frames < 0):
      raise sed_errors.ConfigError(
          'synth.boundary_blur_frames',
          'must be a non-negative integer, got %r' % boundary_blur_frames)
    if not frame_hop > 0:
      raise sed_errors.ConfigError('frame_hop',
                                   'must be > 0, got %r' % frame_hop)
    return super(SynthConfig, cls).__new__(
        cls, int(num_clips), int(clip_frames), int(num_classes),
        float(event_rate), (int(min_frames), int(max_frames)),
        float(score_noise_std), int(boundary_blur_frames),
        float(annotation_jitter_std), int(rng_seed), int(feature_dim),
        float(frame_hop))


class SynthCorpus(
    collections.namedtuple(
        'SynthCorpus', ['vocab', 'grid', 'events', 'labels', 'features'])):
  """A generated corpus.

  Attributes:
    vocab (ClassVocabulary): class_00 ... class_{K-1}.
    grid (FrameGrid): shared by every clip.
    events (list of EventList): per clip, in clip order.
    labels (list of LabelTensor): events rasterized on grid.
    features (list of numpy.ndarray): N x D feature matrices.
  """
  __slots__ = ()

  @property
  def clip_ids(self):
    return [e.clip_id for e in self.events]


def class_names(num_classes):
  return ['class_%02d' % k for k in range(num_classes)]


def clip_ids(num_clips):
  return ['synth_%04d.wav' % i for i in range(num_clips)]


class _PlacementRejected(Exception):
  pass


def _draw_placement(rng, placed, config):
  """Draw one (class, start, end) placement or raise _PlacementRejected."""
  min_frames, max_frames = config.duration_range
  k = int(rng.integers(config.num_classes))
  length = int(rng.integers(min_frames, max_frames + 1))
  start = int(rng.integers(0, config.clip_frames - length + 1))
  end = start + length
  for other_k, other_start, other_end in placed:
    # Same-class events keep at least one background frame between them.
    if other_k == k and start <= other_end and other_start <= end:
      raise _PlacementRejected()
  return k, start, end


def _place_event(rng, placed, config):
  retryer = tenacity.Retrying(
      stop=tenacity.stop_after_attempt(MAX_PLACEMENT_ATTEMPTS),
      retry=tenacity.retry_if_exception_type(_PlacementRejected))
  try:
    return retryer(_draw_placement, rng, placed, config)
  except tenacity.RetryError:
    raise sed_errors.GenerationError(
        'Could not place event %d without same-class overlap after %d '
        'attempts' % (len(placed) + 1, MAX_PLACEMENT_ATTEMPTS)) from None


def class_embeddings(rng, num_classes, feature_dim):
  """K x D matrix with orthogonal rows of norm EMBEDDING_SCALE."""
  q, _ = np.linalg.qr(rng.standard_normal((feature_dim, num_classes)))
  return EMBEDDING_SCALE * q.T


def blurred_activity(labels, blur_frames):
  """Moving average of the labels over 2 * blur_frames + 1 frames."""
  if blur_frames == 0:
    return np.array(labels.values)
  return scipy.ndimage.uniform_filter1d(
      labels.values, size=2 * blur_frames + 1, axis=0, mode='nearest')


def generate_corpus(config):
  """Generate a reproducible corpus from config.rng_seed.

  Args:
    config: (SynthConfig) corpus parameters.

  Returns:
    A SynthCorpus.

  Raises:
    GenerationError: if an event cannot be placed after
      MAX_PLACEMENT_ATTEMPTS draws.
  """
  rng = np.random.default_rng(config.rng_seed)
  vocab = frame_model.ClassVocabulary(class_names(config.num_classes))
  grid = frame_model.FrameGrid(config.clip_frames, config.frame_hop)
  embeddings = class_embeddings(rng, config.num_classes, config.feature_dim)

  events, labels, features = [], [], []
  for clip_id in clip_ids(config.num_clips):
    placed = []
    for _ in range(int(rng.poisson(config.event_rate))):
      placed.append(_place_event(rng, placed, config))
    event_list = frame_model.EventList(clip_id, [
        frame_model.Event(vocab.names[k], grid.frame_to_time(start),
                          grid.frame_to_time(end))
        for k, start, end in placed
    ])
    clip_labels = frame_model.events_to_labels(event_list, grid, vocab)
    activity = blurred_activity(clip_labels, config.boundary_blur_frames)
    noise = rng.standard_normal((grid.num_frames, config.feature_dim))
    events.append(event_list)
    labels.append(clip_labels)
    features.append(activity @ embeddings + config.score_noise_std * noise)
  return SynthCorpus(vocab, grid, events, labels, features)


def _truncated_normal(rng, mean, std, lower, upper):
  """Vectorized draw from N(mean, std) truncated to [lower, upper]."""
  degenerate = upper - lower <= frame_model.TIME_EPSILON
  upper = np.where(degenerate, lower + std, upper)
  draws = scipy.stats.truncnorm.rvs(
      (lower - mean) / std, (upper - mean) / std,
      loc=mean,
      scale=std,
      random_state=rng)
  return np.where(degenerate, mean, np.clip(draws, lower, upper))


def jitter_annotations(events, std, seed, clip_duration=None):
  """Perturb every onset and offset with truncated Gaussian noise.

  Onsets are truncated to [0, offset - d_min] and offsets to
  [new onset + d_min, clip_duration], so events keep their order of
  boundaries and stay in the clip.

  Args:
    events: list of EventList.
    std: (float) noise std in seconds, >= 0; 0 returns the input.
    seed: seed for numpy's default generator.
    clip_duration: optional upper bound for offsets, in seconds.

  Returns:
    list of EventList with the same clips and event counts per class.
  """
  if not math.isfinite(std) or std < 0:
    raise sed_errors.ConfigError('synth.annotation_jitter_std',
                                 'must be >= 0, got %r' % std)
  if std == 0:
    return list(events)

  flat = [e for event_list in events for e in event_list.events]
  if not flat:
    return list(events)
  rng = np.random.default_rng(seed)
  onsets = np.array([e.onset for e in flat])
  offsets = np.array([e.offset for e in flat])
  min_duration = np.minimum(MIN_JITTERED_DURATION, offsets - onsets)
  end = np.inf if clip_duration is None else float(clip_duration)

  new_onsets = _truncated_normal(rng, onsets, std, np.zeros_like(onsets),
                                 offsets - min_duration)
  new_offsets = _truncated_normal(rng, offsets, std, new_onsets + min_duration,
                                  np.maximum(offsets, end))

  jittered = []
  position = 0
  for event_list in events:
    count = len(event_list.events)
    jittered.append(
        frame_model.EventList(event_list.clip_id, [
            frame_model.Event(e.class_name, frame_model.round_time(on),
                              frame_model.round_time(off))
            for e, on, off in zip(event_list.events,
                                  new_onsets[position:position + count],
                                  new_offsets[position:position + count])
        ]))
    position += count
  return jittered


def jittered_corpus(corpus, std, seed):
  """Returns corpus with jittered events and labels; features unchanged."""
  events = jitter_annotations(corpus.events, std, seed, corpus.grid.duration)
  labels = [
      frame_model.events_to_labels(e, corpus.grid, corpus.vocab)
      for e in events
  ]
  return corpus._replace(events=events, labels=labels)
