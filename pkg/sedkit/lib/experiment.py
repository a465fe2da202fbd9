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
"""Desk-scale experiment protocols: paired comparisons and window sweeps.

Corpora are generated once per configuration: the first synth.num_clips
clips train the models, the next synth.num_clips clips evaluate them. When
synth.annotation_jitter_std is set, only the training labels are jittered.

Two sweep protocols are supported:
  grid: every (alpha, sigma) combination.
  two-step: alpha is swept with sigma fixed, then sigma is swept with the
    alpha of the best mean event-F1.
"""

import collections

from . import sed_errors
from . import sed_util
from . import synth
from . import trainer
from . import weighting
import numpy as np

SWEEP_PROTOCOLS = ('grid', 'two-step')


def split_corpus(corpus, num_train):
  """Returns (first num_train clips, remaining clips)."""

  def part(selection):
    return corpus._replace(
        events=corpus.events[selection],
        labels=corpus.labels[selection],
        features=corpus.features[selection])

  return part(slice(0, num_train)), part(slice(num_train, None))


def build_corpora(synth_config):
  """Generate the training and evaluation corpora of an experiment.

  Returns:
    (train_corpus, eval_corpus), each with synth_config.num_clips clips.
  """
  corpus = synth.generate_corpus(
      synth_config._replace(num_clips=2 * synth_config.num_clips))
  train_corpus, eval_corpus = split_corpus(corpus, synth_config.num_clips)
  if synth_config.annotation_jitter_std > 0:
    train_corpus = synth.jittered_corpus(train_corpus,
                                         synth_config.annotation_jitter_std,
                                         synth_config.rng_seed)
  sed_util.log_progress('generated %d training and %d evaluation clips' %
                        (len(train_corpus.events), len(eval_corpus.events)))
  return train_corpus, eval_corpus


class SweepRow(
    collections.namedtuple('SweepRow', [
        'step', 'alpha', 'sigma', 'seed', 'event_f1', 'psds1', 'psds2',
        'onset_error', 'offset_error'
    ])):
  """One trained and evaluated condition."""
  __slots__ = ()


def run_conditions(train_corpus, eval_corpus, config, eval_config, windows,
                   seeds, step):
  """Train and evaluate every (window, seed) pair.

  Returns:
    list of SweepRow ordered by window, then seed.
  """
  jobs = [(window, seed) for window in windows for seed in seeds]

  def run(job):
    window, seed = job
    result = trainer.train_and_evaluate(
        train_corpus, eval_corpus, config._replace(window=window),
        eval_config, seed, arm='alpha=%g sigma=%d' % window)
    return SweepRow(step, window.alpha, window.sigma, seed, *result[2:])

  return sed_util.parallel_map(run, jobs)


def grid_sweep(train_corpus, eval_corpus, config, eval_config, alphas,
               sigmas, seeds=trainer.DEFAULT_SEEDS):
  windows = [
      weighting.WindowParams(alpha, sigma)
      for alpha in alphas
      for sigma in sigmas
  ]
  return run_conditions(train_corpus, eval_corpus, config, eval_config,
                        windows, seeds, 'grid')


def best_alpha(rows):
  """The alpha with the highest mean event-F1 (first listed on ties)."""
  by_alpha = collections.OrderedDict()
  for row in rows:
    by_alpha.setdefault(row.alpha, []).append(row.event_f1)
  return max(by_alpha, key=lambda alpha: np.mean(by_alpha[alpha]))


def two_step_sweep(train_corpus, eval_corpus, config, eval_config, alphas,
                   sigmas, seeds=trainer.DEFAULT_SEEDS):
  """Sweep alpha at config.window.sigma, then sigma at the best alpha."""
  alpha_rows = run_conditions(
      train_corpus, eval_corpus, config, eval_config,
      [weighting.WindowParams(a, config.window.sigma) for a in alphas], seeds,
      'alpha')
  alpha = best_alpha(alpha_rows)
  sed_util.log_progress('best alpha: %g' % alpha)
  sigma_rows = run_conditions(
      train_corpus, eval_corpus, config, eval_config,
      [weighting.WindowParams(alpha, s) for s in sigmas], seeds, 'sigma')
  return alpha_rows + sigma_rows


def sweep(train_corpus, eval_corpus, config, eval_config, alphas, sigmas,
          seeds=trainer.DEFAULT_SEEDS, protocol='grid'):
  """Run a sweep protocol.

  Returns:
    list of SweepRow.

  Raises:
    ConfigError: for an unknown protocol or empty alpha/sigma lists.
  """
  if not alphas:
    raise sed_errors.ConfigError('alpha', 'at least one value is required')
  if not sigmas:
    raise sed_errors.ConfigError('sigma', 'at least one value is required')
  if protocol == 'grid':
    return grid_sweep(train_corpus, eval_corpus, config, eval_config, alphas,
                      sigmas, seeds)
  elif protocol == 'two-step':
    return two_step_sweep(train_corpus, eval_corpus, config, eval_config,
                          alphas, sigmas, seeds)
  raise sed_errors.ConfigError(
      'protocol', 'must be one of %s, got %r' %
      (', '.join(SWEEP_PROTOCOLS), protocol))
