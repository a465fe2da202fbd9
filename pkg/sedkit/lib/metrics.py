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
"""Event-based F1 with collars and the intersection-based PSDS.

Event-F1 is counted by sed_eval's EventBasedMetrics with greedy matching: a
detection matches a reference of the same class iff its onset is within
onset_collar of the reference onset and its offset is within
max(offset_collar, offset_duration_ratio * reference duration) of the
reference offset. Events are handed over in onset order, so each reference
takes the first compatible unmatched detection. F1 is micro-averaged over
classes: 2 TP / (2 TP + FP + FN).

PSDS is computed by psds_eval from one detection table per operating point
(decision threshold). A detection is a true positive candidate when
same-class references cover >= dtc of it, and a reference is detected when
those detections cover >= gtc of it. Detections of another class covering
>= cttc of a reference are also counted as cross-triggers. Per class, the
effective FPR is the false positive rate per hour plus alpha_ct times the
mean cross-trigger rate; the effective TPR is the mean across classes minus
alpha_st times their standard deviation, and PSDS is its area on
[0, e_max] divided by e_max. Classes without reference events are left out.
"""

import collections
import math

from . import postprocess
from . import sed_errors
from . import sed_util
import numpy as np
import pandas as pd
import psds_eval
import sed_eval

DEFAULT_COLLAR = 0.2
DEFAULT_OFFSET_DURATION_RATIO = 0.2
DEFAULT_NUM_THRESHOLDS = 50
DEFAULT_E_MAX = 100.0

_EVENT_COLUMNS = ('filename', 'onset', 'offset', 'event_label')


def default_thresholds(num_thresholds=DEFAULT_NUM_THRESHOLDS):
  """num_thresholds evenly spaced operating points from 0.01 to 0.99."""
  if num_thresholds < 1:
    raise sed_errors.ConfigError('num_thresholds',
                                 'must be >= 1, got %r' % num_thresholds)
  if num_thresholds == 1:
    return (0.5,)
  return tuple(
      round(float(t), 6) for t in np.linspace(0.01, 0.99, num_thresholds))


class F1Config(
    collections.namedtuple(
        'F1Config', ['onset_collar', 'offset_collar',
                     'offset_duration_ratio'])):
  """Collars (seconds) for event-based F1."""
  __slots__ = ()

  def __new__(cls,
              onset_collar=DEFAULT_COLLAR,
              offset_collar=DEFAULT_COLLAR,
              offset_duration_ratio=DEFAULT_OFFSET_DURATION_RATIO):
    values = []
    for key, value in (('onset_collar', onset_collar),
                       ('offset_collar', offset_collar),
                       ('offset_duration_ratio', offset_duration_ratio)):
      value = float(value)
      if not math.isfinite(value) or value < 0:
        raise sed_errors.ConfigError(key, 'must be >= 0, got %r' % value)
      values.append(value)
    return super(F1Config, cls).__new__(cls, *values)


class PSDSConfig(
    collections.namedtuple(
        'PSDSConfig',
        ['dtc', 'gtc', 'cttc', 'alpha_ct', 'alpha_st', 'e_max',
         'thresholds'])):
  """One PSDS scenario.

  Attributes:
    dtc (float): detection tolerance criterion in (0, 1].
    gtc (float): ground-truth coverage criterion in (0, 1].
    cttc (float or None): cross-trigger tolerance criterion in (0, 1], or
      None to disable cross-trigger detection (requires
      alpha_ct = 0).
    alpha_ct (float): cross-trigger penalty, >= 0.
    alpha_st (float): across-class standard deviation penalty, >= 0.
    e_max (float): maximum effective false positives per hour, > 0.
    thresholds (tuple of float): strictly increasing operating points in
      (0, 1).
  """
  __slots__ = ()

  def __new__(cls,
              dtc,
              gtc,
              cttc=None,
              alpha_ct=0.0,
              alpha_st=0.0,
              e_max=DEFAULT_E_MAX,
              thresholds=None):
    for key, value in (('dtc', dtc), ('gtc', gtc), ('cttc', cttc)):
      if value is None and key == 'cttc':
        continue
      if not 0.0 < float(value) <= 1.0:
        raise sed_errors.ConfigError(key,
                                     'must be in (0, 1], got %r' % value)
    for key, value in (('alpha_ct', alpha_ct), ('alpha_st', alpha_st)):
      if not math.isfinite(float(value)) or float(value) < 0:
        raise sed_errors.ConfigError(key, 'must be >= 0, got %r' % value)
    if cttc is None and float(alpha_ct) > 0:
      raise sed_errors.ConfigError('alpha_ct', 'must be 0 when cttc is none')
    if not math.isfinite(float(e_max)) or float(e_max) <= 0:
      raise sed_errors.ConfigError('e_max', 'must be > 0, got %r' % e_max)
    if thresholds is None:
      thresholds = default_thresholds()
    thresholds = tuple(round(float(t), 6) for t in thresholds)
    if not thresholds:
      raise sed_errors.ConfigError('thresholds', 'must not be empty')
    for threshold in thresholds:
      if not 0.0 < threshold < 1.0:
        raise sed_errors.ConfigError(
            'thresholds', 'must be in (0, 1), got %r' % threshold)
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
      raise sed_errors.ConfigError('thresholds', 'must be strictly increasing')
    return super(PSDSConfig, cls).__new__(
        cls, float(dtc), float(gtc), None if cttc is None else float(cttc),
        float(alpha_ct), float(alpha_st), float(e_max), thresholds)


# DCASE 2022 task 4 scenarios.
def scenario_1(thresholds=None):
  return PSDSConfig(
      dtc=0.7, gtc=0.7, cttc=None, alpha_ct=0.0, alpha_st=1.0,
      e_max=DEFAULT_E_MAX, thresholds=thresholds)


def scenario_2(thresholds=None):
  return PSDSConfig(
      dtc=0.1, gtc=0.1, cttc=0.3, alpha_ct=0.5, alpha_st=1.0,
      e_max=DEFAULT_E_MAX, thresholds=thresholds)


def _ratio(numerator, denominator):
  return numerator / denominator if denominator else 0.0


class ClassCounts(collections.namedtuple('ClassCounts', ['tp', 'fp', 'fn'])):
  """Matched (tp), unmatched detection (fp) and missed reference (fn) counts."""
  __slots__ = ()

  @property
  def precision(self):
    return _ratio(self.tp, self.tp + self.fp)

  @property
  def recall(self):
    return _ratio(self.tp, self.tp + self.fn)

  @property
  def f1(self):
    return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn)

  def __add__(self, other):
    return ClassCounts(self.tp + other.tp, self.fp + other.fp,
                       self.fn + other.fn)


class F1Result(collections.namedtuple('F1Result', ['f1', 'per_class'])):
  """Micro-averaged event-F1 and the per-class ClassCounts (ordered dict)."""
  __slots__ = ()


class EvalConfig(
    collections.namedtuple('EvalConfig',
                           ['postprocess', 'f1', 'psds1', 'psds2'])):
  """Everything evaluate() needs besides the data."""
  __slots__ = ()


class MetricReport(
    collections.namedtuple('MetricReport',
                           ['event_f1', 'psds1', 'psds2', 'per_class'])):
  """The three reported numbers plus per-class event-F1 counts."""
  __slots__ = ()


class BoundaryErrors(
    collections.namedtuple('BoundaryErrors',
                           ['onset_error', 'offset_error', 'num_pairs'])):
  """Mean absolute onset/offset errors in seconds (NaN with no pairs)."""
  __slots__ = ()


def _class_names(references, detections, vocab):
  """Returns the class order for reporting, validating against vocab."""
  seen = set()
  for event_list in list(references) + list(detections):
    seen.update(event_list.class_names())
  if vocab is None:
    return sorted(seen)
  for name in sorted(seen):
    vocab.index_of(name)
  return list(vocab.names)


def _index_by_clip(event_lists):
  by_clip = collections.defaultdict(list)
  for event_list in event_lists:
    by_clip[event_list.clip_id].extend(event_list.events)
  return by_clip


def _by_onset(events):
  return sorted(events, key=lambda e: (e.onset, e.offset))


class _CollarMetrics(sed_eval.sound_event.EventBasedMetrics):
  """Greedy event-based counts with separate onset and offset collars."""

  def __init__(self, class_names, config):
    super(_CollarMetrics, self).__init__(
        event_label_list=list(class_names),
        t_collar=config.onset_collar,
        percentage_of_length=config.offset_duration_ratio,
        event_matching_type='greedy')
    self.offset_collar = config.offset_collar

  def validate_offset(self,
                      reference_event,
                      estimated_event,
                      t_collar=DEFAULT_COLLAR,
                      percentage_of_length=DEFAULT_OFFSET_DURATION_RATIO):
    del t_collar
    duration = reference_event['offset'] - reference_event['onset']
    collar = max(self.offset_collar, percentage_of_length * duration)
    return abs(reference_event['offset'] - estimated_event['offset']) <= collar


def _event_records(clip_id, events):
  return [{
      'filename': clip_id,
      'event_label': e.class_name,
      'onset': e.onset,
      'offset': e.offset,
  } for e in _by_onset(events)]


def event_f1(references, detections, config, vocab=None):
  """Event-based F1 with collars.

  Args:
    references: list of EventList.
    detections: list of EventList; a clip missing on either side counts as
      having no events.
    config: (F1Config) collars.
    vocab: optional ClassVocabulary; events of other classes raise.

  Returns:
    An F1Result with the micro-averaged F1 and per-class ClassCounts.

  Raises:
    VocabularyError: if an event class is not in vocab.
  """
  class_names = _class_names(references, detections, vocab)
  ref_by_clip = _index_by_clip(references)
  det_by_clip = _index_by_clip(detections)
  counter = _CollarMetrics(class_names, config)
  for clip_id in sorted(set(ref_by_clip) | set(det_by_clip)):
    refs = ref_by_clip.get(clip_id, [])
    dets = det_by_clip.get(clip_id, [])
    if refs or dets:
      counter.evaluate(
          reference_event_list=_event_records(clip_id, refs),
          estimated_event_list=_event_records(clip_id, dets))

  per_class = collections.OrderedDict()
  totals = ClassCounts(0, 0, 0)
  for name in class_names:
    counts = counter.class_wise[name]
    tp = int(counts['Ntp'])
    per_class[name] = ClassCounts(tp,
                                  int(counts['Nsys']) - tp,
                                  int(counts['Nref']) - tp)
    totals += per_class[name]
  return F1Result(totals.f1, per_class)


def _overlap(first, second):
  return max(0.0, min(first.offset, second.offset) -
             max(first.onset, second.onset))


def _detections_at(detections_by_threshold, threshold):
  for key, detections in detections_by_threshold.items():
    if abs(float(key) - threshold) <= 1e-9:
      return detections
  raise sed_errors.ConfigError(
      'thresholds', 'no detections supplied for operating point %r' %
      threshold)


def _event_table(event_lists, class_names):
  """A psds_eval event table of the events of the given classes."""
  rows = []
  for event_list in sorted(event_lists, key=lambda e: e.clip_id):
    rows.extend((event_list.clip_id, e.onset, e.offset, e.class_name)
                for e in _by_onset(event_list.events)
                if e.class_name in class_names)
  table = pd.DataFrame(rows, columns=_EVENT_COLUMNS)
  return table.astype({'onset': float, 'offset': float})


def _check_durations(event_lists, clip_durations):
  unknown = sorted(
      set(e.clip_id for e in event_lists if e.events) - set(clip_durations))
  if unknown:
    raise sed_errors.ValidationError('No duration for clips: %s' %
                                     ', '.join(unknown))
  for clip_id, duration in clip_durations.items():
    if not duration > 0:
      raise sed_errors.ValidationError(
          'Clip %s has duration %r, must be > 0' % (clip_id, duration))


def _psds_score(references, detections_by_threshold, config, clip_durations,
                vocab):
  """Returns psds_eval's PSDS result, or None without reference events."""
  if not clip_durations:
    raise sed_errors.ValidationError('No clips to evaluate')
  all_detections = []
  for threshold in config.thresholds:
    all_detections.extend(_detections_at(detections_by_threshold, threshold))
  _class_names(references, all_detections, vocab)
  _check_durations(list(references) + all_detections, clip_durations)
  scored = set()
  for event_list in references:
    scored.update(event_list.class_names())
  if not scored:
    return None

  metadata = pd.DataFrame(
      sorted(clip_durations.items()), columns=('filename', 'duration'))
  # psds_eval has no "off" setting; with alpha_ct = 0 the value is unused.
  cttc = 1.0 if config.cttc is None else config.cttc
  try:
    evaluator = psds_eval.PSDSEval(
        dtc_threshold=config.dtc,
        gtc_threshold=config.gtc,
        cttc_threshold=cttc,
        ground_truth=_event_table(references, scored),
        metadata=metadata)
    added = set()
    for threshold in config.thresholds:
      table = _event_table(
          _detections_at(detections_by_threshold, threshold), scored)
      key = tuple(table.itertuples(index=False, name=None))
      if key in added:
        continue
      added.add(key)
      table.index = range(1, len(table) + 1)
      evaluator.add_operating_point(
          table, info={'name': 'threshold %g' % threshold,
                       'threshold': threshold})
    return evaluator.psds(
        alpha_ct=config.alpha_ct,
        alpha_st=config.alpha_st,
        max_efpr=config.e_max)
  except psds_eval.psds.PSDSEvalError as e:
    raise sed_errors.ValidationError('PSDS evaluation failed: %s' % e)


def psd_roc(references,
            detections_by_threshold,
            config,
            clip_durations,
            vocab=None):
  """The effective PSD-ROC curve.

  Args:
    references: list of EventList.
    detections_by_threshold: dict mapping each configured threshold to a
      list of EventList decoded at that threshold.
    config: (PSDSConfig) the scenario.
    clip_durations: dict mapping every evaluated clip_id to its duration in
      seconds; the dataset duration is their sum.
    vocab: optional ClassVocabulary.

  Returns:
    (efpr, etpr): numpy arrays of the step curve; [0.0], [0.0] when there
    are no reference events.
  """
  score = _psds_score(references, detections_by_threshold, config,
                      clip_durations, vocab)
  if score is None:
    return np.array([0.0]), np.array([0.0])
  return (np.asarray(score.plt.xp, dtype=np.float64),
          np.asarray(score.plt.yp, dtype=np.float64))


def psds(references,
         detections_by_threshold,
         config,
         clip_durations,
         vocab=None):
  """Polyphonic sound event detection score in [0, 1].

  See psd_roc for the arguments.
  """
  score = _psds_score(references, detections_by_threshold, config,
                      clip_durations, vocab)
  if score is None:
    return 0.0
  return min(1.0, max(0.0, float(score.value)))


def boundary_errors(references, detections):
  """Mean absolute onset and offset errors of decoded events.

  Each reference is paired with the same-class detection that overlaps it
  most (references without an overlapping detection are skipped).

  Returns:
    A BoundaryErrors; errors are NaN when nothing could be paired.
  """
  det_by_clip = _index_by_clip(detections)
  onset_errors = []
  offset_errors = []
  for clip_id, refs in sorted(_index_by_clip(references).items()):
    dets = _by_onset(det_by_clip.get(clip_id, []))
    for ref in refs:
      best = None
      for det in dets:
        if det.class_name != ref.class_name:
          continue
        overlap = _overlap(ref, det)
        if overlap > 0 and (best is None or overlap > best[0]):
          best = (overlap, det)
      if best is not None:
        onset_errors.append(abs(best[1].onset - ref.onset))
        offset_errors.append(abs(best[1].offset - ref.offset))
  if not onset_errors:
    return BoundaryErrors(float('nan'), float('nan'), 0)
  return BoundaryErrors(
      math.fsum(onset_errors) / len(onset_errors),
      math.fsum(offset_errors) / len(offset_errors), len(onset_errors))


def decode_scores(scores, post_config):
  """Run postprocess_pipeline on every clip of a {clip_id: ScoreTensor} map.

  Returns:
    list of EventList in sorted clip_id order.
  """
  clip_ids = sorted(scores)
  return sed_util.parallel_map(
      lambda clip_id: postprocess.postprocess_pipeline(
          scores[clip_id], post_config, clip_id=clip_id), clip_ids)


def clip_durations(scores):
  """Seconds of audio per clip of a {clip_id: ScoreTensor} map."""
  return collections.OrderedDict(
      (clip_id, scores[clip_id].grid.duration) for clip_id in sorted(scores))


def sweep_detections(scores, post_config, thresholds):
  """Decode every clip at every threshold, keeping the median filters.

  Returns:
    dict mapping each threshold to a list of EventList.
  """
  thresholds = sorted(thresholds)
  sweep = sed_util.parallel_map(
      lambda t: decode_scores(scores, post_config.with_threshold(t)),
      thresholds)
  return dict(zip(thresholds, sweep))


def evaluate(references, scores, post_config, f1_config, psds1_config,
             psds2_config):
  """Event-F1 at the fixed thresholds plus both PSDS scenarios.

  Args:
    references: list of EventList.
    scores: dict mapping clip_id to ScoreTensor; every clip shares one
      class vocabulary.
    post_config: (PostprocessConfig) thresholds and filters for event-F1;
      the PSDS sweeps replace the thresholds and keep the filters.
    f1_config: (F1Config) collars.
    psds1_config: (PSDSConfig) scenario 1.
    psds2_config: (PSDSConfig) scenario 2.

  Returns:
    A MetricReport.
  """
  if not scores:
    raise sed_errors.ValidationError('No score tensors to evaluate')
  clip_ids = sorted(scores)
  vocab = scores[clip_ids[0]].vocab
  for clip_id in clip_ids:
    if scores[clip_id].vocab != vocab:
      raise sed_errors.DimensionError(
          'Clip %s has classes %s, expected %s' %
          (clip_id, list(scores[clip_id].vocab.names), list(vocab.names)))
  durations = clip_durations(scores)

  detections = decode_scores(scores, post_config)
  f1_result = event_f1(references, detections, f1_config, vocab)

  detections_by_threshold = sweep_detections(
      scores, post_config,
      set(psds1_config.thresholds) | set(psds2_config.thresholds))

  psds1 = psds(references, detections_by_threshold, psds1_config,
               durations, vocab)
  psds2 = psds(references, detections_by_threshold, psds2_config,
               durations, vocab)
  return MetricReport(f1_result.f1, psds1, psds2, f1_result.per_class)
