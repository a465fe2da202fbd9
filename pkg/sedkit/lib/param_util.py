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
"""Configuration: key=value files, --set overrides and the PipelineConfig.

Configuration files hold one "key=value" pair per line. Lines whose first
non-blank character is "#" are comments and blank lines are ignored;
whitespace around keys and values is stripped. Settings are resolved in
order of increasing precedence: built-in defaults, the --config file,
--set KEY=VALUE flags, then dedicated flags such as --alpha.
"""

import argparse
import collections
import math

from . import frame_model
from . import loss
from . import metrics
from . import postprocess
from . import sed_errors
from . import sed_util
from . import synth
from . import trainer
from . import weighting

# Built-in defaults, as they would be written in a configuration file.
DEFAULTS = collections.OrderedDict([
    ('frame_hop', '0.064'),
    ('classes', ''),
    ('window.alpha', '12'),
    ('window.sigma', '7'),
    ('threshold.default', '0.5'),
    ('medfilt_frames.default', '7'),
    ('f1.onset_collar', '0.2'),
    ('f1.offset_collar', '0.2'),
    ('f1.offset_duration_ratio', '0.2'),
    ('psds1.dtc', '0.7'),
    ('psds1.gtc', '0.7'),
    ('psds1.cttc', 'none'),
    ('psds1.alpha_ct', '0'),
    ('psds1.alpha_st', '1'),
    ('psds1.e_max', '100'),
    ('psds1.num_thresholds', '50'),
    ('psds1.thresholds', ''),
    ('psds2.dtc', '0.1'),
    ('psds2.gtc', '0.1'),
    ('psds2.cttc', '0.3'),
    ('psds2.alpha_ct', '0.5'),
    ('psds2.alpha_st', '1'),
    ('psds2.e_max', '100'),
    ('psds2.num_thresholds', '50'),
    ('psds2.thresholds', ''),
    ('train.epochs', '200'),
    ('train.learning_rate', '0.5'),
    ('train.batch_clips', '4'),
    ('train.context', '2'),
    ('train.seed', '0'),
    ('train.w_weak', '0'),
    ('train.w_cons', '0'),
    ('train.class_weighting', 'none'),
    ('train.lambda', '10'),
    ('train.mask_normalization', 'none'),
    ('synth.num_clips', '40'),
    ('synth.clip_frames', '156'),
    ('synth.num_classes', '3'),
    ('synth.event_rate', '2.0'),
    ('synth.min_duration', '4'),
    ('synth.max_duration', '30'),
    ('synth.score_noise_std', '0.5'),
    ('synth.boundary_blur_frames', '2'),
    ('synth.annotation_jitter_std', '0'),
    ('synth.feature_dim', '16'),
    ('synth.seed', '0'),
])

# Keys whose suffix is a class name (or "default" where listed in DEFAULTS).
PER_CLASS_PREFIXES = ('threshold.', 'medfilt_frames.', 'medfilt_seconds.')


class ListParamAction(argparse.Action):
  """Append each value as a separate element to the parser destination.

  For the parameters:

    --set a=1 b=2 --set c=3

  ListParamAction yields:

    args.set = ['a=1', 'b=2', 'c=3']
  """

  def __call__(self, parser, namespace, values, option_string=None):
    params = list(getattr(namespace, self.dest, None) or [])
    params.extend(values)
    setattr(namespace, self.dest, params)


def split_pair(pair_string, separator='='):
  """Split "key=value" into a stripped (key, value) pair, or return None."""
  if separator not in pair_string:
    return None
  key, value = pair_string.split(separator, 1)
  return key.strip(), value.strip()


def parse_config_text(text, path='<config>'):
  """Parse configuration text into an ordered dict of raw string values.

  Raises:
    ParseError: for a non-comment line without "=" or with an empty key.
    ConfigError: for a key set twice.
  """
  settings = collections.OrderedDict()
  for line_num, line in enumerate(text.splitlines(), start=1):
    stripped = line.strip()
    if not stripped or stripped.startswith('#'):
      continue
    pair = split_pair(stripped)
    if pair is None or not pair[0]:
      raise sed_errors.ParseError('expected key=value, got %r' % stripped,
                                  path, line_num)
    key, value = pair
    if key in settings:
      raise sed_errors.ConfigError(key,
                                   'set twice (line %d of %s)' % (line_num,
                                                                  path))
    settings[key] = value
  return settings


def load_config_file(path):
  return parse_config_text(sed_util.load_file(path), path)


def parse_set_args(pairs):
  """Parse --set KEY=VALUE flags; a later flag overrides an earlier one."""
  settings = collections.OrderedDict()
  for arg in pairs or []:
    pair = split_pair(arg)
    if pair is None or not pair[0]:
      raise sed_errors.ConfigError(arg, '--set expects KEY=VALUE')
    settings[pair[0]] = pair[1]
  return settings


def is_known_key(key):
  if key in DEFAULTS:
    return True
  for prefix in PER_CLASS_PREFIXES:
    if key.startswith(prefix) and len(key) > len(prefix):
      return True
  return False


def merge_settings(*layers):
  """Merge setting dicts, later layers winning, and reject unknown keys."""
  merged = collections.OrderedDict(DEFAULTS)
  for layer in layers:
    for key, value in (layer or {}).items():
      if not is_known_key(key):
        raise sed_errors.ConfigError(key, 'unknown configuration key')
      merged[key] = value
  return merged


def load_settings(config_path=None, set_args=None, flag_settings=None):
  """Resolve defaults, config file, --set flags and dedicated flags."""
  file_settings = load_config_file(config_path) if config_path else None
  return merge_settings(file_settings, parse_set_args(set_args),
                        flag_settings)


def _number(settings, key, kind=float):
  value = settings[key]
  try:
    number = float(value)
  except ValueError:
    raise sed_errors.ConfigError(key, 'not a number: %r' % value) from None
  if not math.isfinite(number):
    raise sed_errors.ConfigError(key, 'must be finite, got %r' % value)
  if kind is int:
    if not number.is_integer():
      raise sed_errors.ConfigError(key, 'not an integer: %r' % value)
    return int(number)
  return number


def _float_list(settings, key):
  values = [v.strip() for v in settings[key].split(',') if v.strip()]
  try:
    return [float(v) for v in values]
  except ValueError:
    raise sed_errors.ConfigError(
        key, 'expected comma-separated numbers, got %r' %
        settings[key]) from None


def _with_key(key, build):
  """Run build(), prefixing the key of ConfigErrors it raises with key."""
  try:
    return build()
  except sed_errors.ConfigError as e:
    if e.key.startswith(key + '.') or e.key == key:
      raise
    raise sed_errors.ConfigError('%s.%s' % (key, e.key), e.detail) from None


def resolve_vocabulary(settings, data_vocab=None, exact=True):
  """Returns the class vocabulary.

  The "classes" setting wins; it must then equal data_vocab, or contain its
  classes when exact is False (classes seen in event files). Without
  either, the synthetic class names for synth.num_classes are used.
  """
  names = [n.strip() for n in settings['classes'].split(',') if n.strip()]
  if names:
    try:
      vocab = frame_model.ClassVocabulary(names)
    except sed_errors.VocabularyError as e:
      raise sed_errors.ConfigError('classes', str(e)) from None
    if data_vocab is not None and (data_vocab != vocab if exact else any(
        name not in vocab for name in data_vocab)):
      raise sed_errors.ConfigError(
          'classes', '%s does not match the data classes %s' %
          (list(vocab.names), list(data_vocab.names)))
    return vocab
  if data_vocab is not None:
    return data_vocab
  num_classes = _number(settings, 'synth.num_classes', int)
  if num_classes < 1:
    raise sed_errors.ConfigError('synth.num_classes',
                                 'must be >= 1, got %d' % num_classes)
  return frame_model.ClassVocabulary(synth.class_names(num_classes))


def resolve_frame_hop(settings):
  frame_hop = _number(settings, 'frame_hop')
  if not frame_hop > 0:
    raise sed_errors.ConfigError('frame_hop',
                                 'must be > 0, got %r' % frame_hop)
  return frame_hop


def _check_class_keys(settings, vocab):
  for key in settings:
    for prefix in PER_CLASS_PREFIXES:
      if key.startswith(prefix):
        name = key[len(prefix):]
        if name == 'default' and key in DEFAULTS:
          continue
        if name not in vocab:
          raise sed_errors.ConfigError(
              key, 'unknown class %r (classes: %s)' %
              (name, ', '.join(vocab.names)))


def _postprocess_config(settings, vocab, frame_hop):
  grid = frame_model.FrameGrid(1, frame_hop)
  thresholds = []
  lengths = []
  for name in vocab.names:
    threshold_key = 'threshold.%s' % name
    if threshold_key not in settings:
      threshold_key = 'threshold.default'
    thresholds.append((threshold_key, _number(settings, threshold_key)))

    frames_key = 'medfilt_frames.%s' % name
    seconds_key = 'medfilt_seconds.%s' % name
    if frames_key in settings and seconds_key in settings:
      raise sed_errors.ConfigError(seconds_key,
                                   'conflicts with %s' % frames_key)
    if seconds_key in settings:
      lengths.append(
          postprocess.filter_length_from_seconds(
              _number(settings, seconds_key), grid))
    else:
      if frames_key not in settings:
        frames_key = 'medfilt_frames.default'
      length = _number(settings, frames_key, int)
      if length < 1 or length % 2 == 0:
        raise sed_errors.ConfigError(
            frames_key, 'must be an odd integer >= 1, got %d' % length)
      lengths.append(length)

  for key, threshold in thresholds:
    if not 0 < threshold < 1:
      raise sed_errors.ConfigError(key,
                                   'must be in (0, 1), got %r' % threshold)
  return postprocess.PostprocessConfig([t for _, t in thresholds], lengths)


def _psds_config(settings, prefix):
  get = lambda name: settings['%s.%s' % (prefix, name)]
  thresholds = _float_list(settings, prefix + '.thresholds')
  if not thresholds:
    thresholds = _with_key(
        prefix, lambda: metrics.default_thresholds(
            _number(settings, prefix + '.num_thresholds', int)))
  cttc = get('cttc')
  return _with_key(
      prefix, lambda: metrics.PSDSConfig(
          dtc=_number(settings, prefix + '.dtc'),
          gtc=_number(settings, prefix + '.gtc'),
          cttc=None if cttc.lower() == 'none' else _number(
              settings, prefix + '.cttc'),
          alpha_ct=_number(settings, prefix + '.alpha_ct'),
          alpha_st=_number(settings, prefix + '.alpha_st'),
          e_max=_number(settings, prefix + '.e_max'),
          thresholds=thresholds))


def _window_params(settings):
  return _with_key(
      'window', lambda: weighting.WindowParams(
          _number(settings, 'window.alpha'), _number(settings,
                                                     'window.sigma')))


def _train_config(settings, window):
  combiner = _with_key(
      'train', lambda: loss.CombinerWeights(
          _number(settings, 'train.w_weak'), _number(settings, 'train.w_cons')))
  lam = _number(settings, 'train.lambda')
  if not lam > 0:
    raise sed_errors.ConfigError('train.lambda', 'must be > 0, got %r' % lam)
  return trainer.TrainConfig(
      epochs=_number(settings, 'train.epochs', int),
      learning_rate=_number(settings, 'train.learning_rate'),
      batch_clips=_number(settings, 'train.batch_clips', int),
      window=window,
      combiner=combiner,
      seed=_number(settings, 'train.seed', int),
      context=_number(settings, 'train.context', int),
      class_weighting=settings['train.class_weighting'],
      lam=lam,
      mask_normalization=settings['train.mask_normalization'])


def _synth_config(settings, frame_hop):
  return synth.SynthConfig(
      num_clips=_number(settings, 'synth.num_clips', int),
      clip_frames=_number(settings, 'synth.clip_frames', int),
      num_classes=_number(settings, 'synth.num_classes', int),
      event_rate=_number(settings, 'synth.event_rate'),
      duration_range=(_number(settings, 'synth.min_duration', int),
                      _number(settings, 'synth.max_duration', int)),
      score_noise_std=_number(settings, 'synth.score_noise_std'),
      boundary_blur_frames=_number(settings, 'synth.boundary_blur_frames',
                                   int),
      annotation_jitter_std=_number(settings, 'synth.annotation_jitter_std'),
      rng_seed=_number(settings, 'synth.seed', int),
      feature_dim=_number(settings, 'synth.feature_dim', int),
      frame_hop=frame_hop)


class PipelineConfig(
    collections.namedtuple('PipelineConfig', [
        'frame_hop', 'vocab', 'window', 'postprocess', 'f1', 'psds1', 'psds2',
        'train', 'synth'
    ])):
  """Every setting of the pipeline, validated."""
  __slots__ = ()

  def eval_config(self):
    return metrics.EvalConfig(self.postprocess, self.f1, self.psds1,
                              self.psds2)


def build_pipeline_config(settings, data_vocab=None, exact=True):
  """Validate merged settings into a PipelineConfig.

  Args:
    settings: dict from load_settings or merge_settings.
    data_vocab: optional ClassVocabulary found in the input data.
    exact: whether data_vocab must equal the "classes" setting.

  Raises:
    ConfigError: naming the offending key.
  """
  frame_hop = resolve_frame_hop(settings)
  vocab = resolve_vocabulary(settings, data_vocab, exact)
  _check_class_keys(settings, vocab)
  window = _window_params(settings)
  f1 = _with_key(
      'f1', lambda: metrics.F1Config(
          _number(settings, 'f1.onset_collar'),
          _number(settings, 'f1.offset_collar'),
          _number(settings, 'f1.offset_duration_ratio')))
  return PipelineConfig(
      frame_hop=frame_hop,
      vocab=vocab,
      window=window,
      postprocess=_postprocess_config(settings, vocab, frame_hop),
      f1=f1,
      psds1=_psds_config(settings, 'psds1'),
      psds2=_psds_config(settings, 'psds2'),
      train=_train_config(settings, window),
      synth=_synth_config(settings, frame_hop))
