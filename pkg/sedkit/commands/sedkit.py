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
"""The sedkit command line: one subcommand per pipeline stage.

Every subcommand writes its result files, then prints a summary table to
stdout; diagnostics go to stderr. Exit codes:
  0: success
  1: input could not be read or parsed
  2: invalid configuration or data
  3: any other failure
"""

import argparse
import collections
import os
import sys

from .._sedkit_version import SEDKIT_VERSION
from ..lib import event_io
from ..lib import experiment
from ..lib import frame_model
from ..lib import metrics
from ..lib import output_formatter
from ..lib import param_util
from ..lib import postprocess
from ..lib import sed_errors
from ..lib import sed_util
from ..lib import synth
from ..lib import trainer
from ..lib import weighting

EXIT_OK = 0
EXIT_PARSE_ERROR = 1
EXIT_VALIDATION_ERROR = 2
EXIT_INTERNAL_ERROR = 3

METRICS_COLUMNS = ('system', 'event_f1', 'psds1', 'psds2')
PER_CLASS_COLUMNS = ('class', 'tp', 'fp', 'fn', 'precision', 'recall', 'f1')
ROC_COLUMNS = ('scenario', 'efpr', 'etpr')
TRACE_COLUMNS = ('epoch', 'strong', 'weak', 'consistency', 'total')
RUN_COLUMNS = trainer.RunResult._fields
SUMMARY_COLUMNS = trainer.ArmSummary._fields
SWEEP_COLUMNS = experiment.SweepRow._fields
CLASS_WEIGHT_COLUMNS = ('class', 'event_count', 'frame_count', 'count_weight',
                        'effective_weight')

_GAIN_ROW = 'gain_percent'


def _add_common_arguments(parser):
  parser.add_argument(
      '--config', metavar='FILE', help='Configuration file of key=value lines.')
  parser.add_argument(
      '--set',
      nargs='+',
      action=param_util.ListParamAction,
      default=[],
      metavar='KEY=VALUE',
      help='Override configuration settings (repeatable).')
  parser.add_argument(
      '--frame-hop',
      type=float,
      help='Seconds per frame; overrides the frame_hop setting.')
  parser.add_argument(
      '--format',
      default='text',
      choices=output_formatter.FORMATS,
      help='Format of the stdout summary (default: text).')
  parser.add_argument(
      '--verbose',
      action='store_true',
      help='Log timestamped progress messages to stderr.')


def _add_window_arguments(parser):
  parser.add_argument(
      '--alpha', type=float, help='Sin window height; overrides window.alpha.')
  parser.add_argument(
      '--sigma', type=int, help='Sin window width; overrides window.sigma.')


def _add_grid_arguments(parser):
  group = parser.add_mutually_exclusive_group()
  group.add_argument(
      '--clip-duration',
      type=float,
      help='Clip length in seconds, used to rasterize event files.')
  group.add_argument(
      '--num-frames',
      type=int,
      help='Frames per clip, used to rasterize event files.')


def create_parser(prog='sedkit'):
  """Create the argument parser with one subparser per command."""
  parser = argparse.ArgumentParser(
      prog=prog,
      description='Onset/offset weighted loss toolkit for sound event '
      'detection.',
      formatter_class=argparse.RawDescriptionHelpFormatter)
  parser.add_argument(
      '--version',
      action='version',
      version='sedkit version: %s' % SEDKIT_VERSION)
  subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
  subparsers.required = True

  def add(name, help_text):
    subparser = subparsers.add_parser(name, help=help_text,
                                      description=help_text)
    _add_common_arguments(subparser)
    return subparser

  p = add('weights', 'Build onset/offset weight masks from labels.')
  p.add_argument(
      'labels', help='Label CSV, or event TSV (writes one mask per clip).')
  p.add_argument(
      '--output',
      required=True,
      help='Mask CSV (label CSV input) or directory (event TSV input).')
  _add_window_arguments(p)
  _add_grid_arguments(p)

  p = add('medfilt', 'Binarize and median filter score files.')
  p.add_argument('scores', help='Score CSV or a directory of score CSVs.')
  p.add_argument(
      '--output', required=True, help='Output CSV, or directory for a '
      'directory input.')

  p = add('decode', 'Decode score files into an event TSV.')
  p.add_argument('scores', help='Score CSV or a directory of score CSVs.')
  p.add_argument('--output', required=True, help='Event TSV to write.')
  p.add_argument(
      '--clip-suffix',
      default='.wav',
      help='Appended to score file stems to form clip ids (default: .wav).')

  p = add('eval', 'Compute event-F1, PSDS1 and PSDS2.')
  p.add_argument('references', help='Reference event TSV.')
  p.add_argument(
      'scores', help='Directory with one <clip stem>.csv score file per clip.')
  p.add_argument('--output', required=True, help='Metrics CSV to write.')
  p.add_argument('--system', default='system', help='Value of the system '
                 'column.')
  p.add_argument('--per-class-output', help='Per-class event-F1 CSV.')
  p.add_argument('--roc-output', help='Effective PSD-ROC CSV.')

  p = add('synth', 'Generate a synthetic corpus.')
  p.add_argument(
      '--output-dir',
      required=True,
      help='Receives events.tsv, features/ and labels/.')

  p = add('jitter', 'Perturb event boundaries with truncated Gaussian noise.')
  p.add_argument('events', help='Event TSV.')
  p.add_argument('--output', required=True, help='Event TSV to write.')
  p.add_argument(
      '--std',
      type=float,
      help='Noise std in seconds (default: synth.annotation_jitter_std).')
  p.add_argument('--seed', type=int, help='Seed (default: synth.seed).')
  p.add_argument(
      '--clip-duration', type=float, help='Upper bound for offsets, seconds.')

  p = add('train-toy', 'Train the linear frame model on a synthetic corpus.')
  p.add_argument(
      '--output-dir',
      required=True,
      help='Receives model.txt and loss_trace.csv.')
  _add_window_arguments(p)

  p = add('experiment', 'Compare paired BCE and OWBCE training runs.')
  p.add_argument('--output', required=True, help='Per-arm summary CSV.')
  p.add_argument('--runs-output', help='Per-run CSV.')
  p.add_argument(
      '--seeds',
      type=int,
      nargs='+',
      default=list(trainer.DEFAULT_SEEDS),
      help='Training seeds shared by both arms.')
  _add_window_arguments(p)

  p = add('sweep', 'Train and evaluate over sin window parameters.')
  p.add_argument('--output', required=True, help='Sweep CSV to write.')
  p.add_argument(
      '--alpha', type=float, nargs='+', required=True, help='Alpha values.')
  p.add_argument(
      '--sigma', type=int, nargs='+', required=True, help='Sigma values.')
  p.add_argument(
      '--seeds',
      type=int,
      nargs='+',
      default=list(trainer.DEFAULT_SEEDS),
      help='Training seeds.')
  p.add_argument(
      '--protocol',
      default='grid',
      choices=experiment.SWEEP_PROTOCOLS,
      help='grid: all combinations; two-step: alpha first, then sigma.')

  p = add('class-weights', 'Report class-imbalance loss weights.')
  p.add_argument(
      'labels', help='Directory of label CSVs, or an event TSV.')
  p.add_argument('--output', required=True, help='CSV to write.')
  _add_grid_arguments(p)

  p = add('predict', 'Score feature files with a trained model.')
  p.add_argument('model', help='Model file written by train-toy.')
  p.add_argument('features', help='Directory of feature CSVs.')
  p.add_argument(
      '--output-dir', required=True, help='Receives one score CSV per clip.')

  return parser


def _flag_settings(args):
  """Dedicated flags, as settings that win over --config and --set."""
  flags = collections.OrderedDict()
  if args.frame_hop is not None:
    flags['frame_hop'] = repr(args.frame_hop)
  for name, key in (('alpha', 'window.alpha'), ('sigma', 'window.sigma')):
    value = getattr(args, name, None)
    if value is not None and not isinstance(value, list):
      flags[key] = repr(value)
  return flags


def load_config(args, data_vocab=None, exact=True):
  settings = param_util.load_settings(args.config, args.set,
                                      _flag_settings(args))
  return param_util.build_pipeline_config(settings, data_vocab, exact)


def _frame_hop(args):
  return param_util.resolve_frame_hop(
      param_util.load_settings(args.config, args.set, _flag_settings(args)))


def _frame_files(path):
  """Returns ((stem, path) pairs, is_directory) for a file or directory."""
  if os.path.isdir(path):
    return event_io.list_frame_files(path), True
  return [(event_io.clip_stem(os.path.basename(path)), path)], False


def _event_vocab(event_lists):
  names = sorted(set(n for e in event_lists for n in e.class_names()))
  if not names:
    return None
  return frame_model.ClassVocabulary(names)


def _event_grid(args, frame_hop):
  if args.num_frames is not None:
    return frame_model.FrameGrid(args.num_frames, frame_hop)
  if args.clip_duration is not None:
    return frame_model.FrameGrid.for_duration(args.clip_duration, frame_hop)
  raise sed_errors.ConfigError(
      'clip_duration', '--clip-duration or --num-frames is required for '
      'event files')


def _read_events_as_labels(args):
  """Rasterize an event TSV: returns (config, [(stem, LabelTensor)])."""
  event_lists = event_io.read_event_file(args.labels)
  config = load_config(args, _event_vocab(event_lists), exact=False)
  grid = _event_grid(args, config.frame_hop)
  return config, [(event_io.clip_stem(e.clip_id),
                   frame_model.events_to_labels(e, grid, config.vocab))
                  for e in event_lists]


def cmd_weights(args):
  if args.labels.endswith('.tsv'):
    config, labeled = _read_events_as_labels(args)
    outputs = [(stem, labels, os.path.join(args.output, stem + '.csv'))
               for stem, labels in labeled]
  else:
    hop = _frame_hop(args)
    labels = event_io.read_label_file(args.labels, hop)
    config = load_config(args, labels.vocab)
    outputs = [(event_io.clip_stem(os.path.basename(args.labels)), labels,
                args.output)]

  rows = []
  for stem, labels, path in outputs:
    mask = weighting.build_weight_mask(labels, config.window)
    event_io.write_score_file(mask, path)
    rows.append((stem, labels.num_frames, float(mask.values.max()),
                 float(mask.values.mean())))
  return ('clip', 'frames', 'max_weight', 'mean_weight'), rows


def _read_scores(path, frame_hop):
  """Returns (is_directory, [(stem, ScoreTensor)]) sharing one vocabulary."""
  files, is_dir = _frame_files(path)
  if not files:
    raise sed_errors.ValidationError('No score files in %s' % path)
  vocab = None
  scores = []
  for stem, file_path in files:
    tensor = event_io.read_score_file(file_path, frame_hop, vocab)
    vocab = tensor.vocab
    scores.append((stem, tensor))
  return is_dir, scores


def cmd_medfilt(args):
  is_dir, scores = _read_scores(args.scores, _frame_hop(args))
  config = load_config(args, scores[0][1].vocab)
  rows = []
  for stem, tensor in scores:
    filtered = postprocess.median_filter(
        postprocess.binarize(tensor, config.postprocess), config.postprocess)
    path = os.path.join(args.output, stem + '.csv') if is_dir else args.output
    event_io.write_score_file(filtered, path)
    rows.append((stem, filtered.num_frames,
                 int(filtered.values.sum())))
  return ('clip', 'frames', 'active_frames'), rows


def cmd_decode(args):
  _, scores = _read_scores(args.scores, _frame_hop(args))
  config = load_config(args, scores[0][1].vocab)
  by_clip = {stem + args.clip_suffix: tensor for stem, tensor in scores}
  event_lists = metrics.decode_scores(by_clip, config.postprocess)
  event_io.write_event_file(event_lists, args.output)
  return ('clip', 'events'), [(e.clip_id, len(e.events)) for e in event_lists]


def _match_clips(references, scores):
  """Key score tensors by reference clip id; reject mismatched clip sets."""
  ref_ids = {event_io.clip_stem(e.clip_id): e.clip_id for e in references}
  score_stems = set(stem for stem, _ in scores)
  missing_scores = sorted(set(ref_ids) - score_stems)
  missing_refs = sorted(score_stems - set(ref_ids))
  if missing_scores or missing_refs:
    problems = []
    if missing_scores:
      problems.append('no scores for: %s' % ', '.join(missing_scores))
    if missing_refs:
      problems.append('no references for: %s' % ', '.join(missing_refs))
    raise sed_errors.ValidationError('Mismatched clip ids; %s' %
                                     '; '.join(problems))
  return {ref_ids[stem]: tensor for stem, tensor in scores}


def cmd_eval(args):
  references = event_io.read_event_file(args.references)
  if not os.path.isdir(args.scores):
    raise sed_errors.ValidationError('%s is not a directory' % args.scores)
  _, scores = _read_scores(args.scores, _frame_hop(args))
  config = load_config(args, scores[0][1].vocab)
  by_clip = _match_clips(references, scores)

  report = metrics.evaluate(references, by_clip, config.postprocess,
                            config.f1, config.psds1, config.psds2)
  rows = [(args.system, report.event_f1, report.psds1, report.psds2)]
  output_formatter.write_csv(args.output, METRICS_COLUMNS, rows)

  if args.per_class_output:
    output_formatter.write_csv(
        args.per_class_output, PER_CLASS_COLUMNS,
        [(name, c.tp, c.fp, c.fn, c.precision, c.recall, c.f1)
         for name, c in report.per_class.items()])

  if args.roc_output:
    scenarios = (('psds1', config.psds1), ('psds2', config.psds2))
    detections = metrics.sweep_detections(
        by_clip, config.postprocess,
        set(config.psds1.thresholds) | set(config.psds2.thresholds))
    roc_rows = []
    for name, scenario in scenarios:
      efpr, etpr = metrics.psd_roc(references, detections, scenario,
                                   metrics.clip_durations(by_clip),
                                   config.vocab)
      roc_rows.extend((name, x, y) for x, y in zip(efpr, etpr))
    output_formatter.write_csv(args.roc_output, ROC_COLUMNS, roc_rows)
  return METRICS_COLUMNS, rows


def cmd_synth(args):
  config = load_config(args)
  corpus = synth.generate_corpus(config.synth)
  event_io.write_event_file(corpus.events,
                            os.path.join(args.output_dir, 'events.tsv'))
  rows = []
  for events, labels, features in zip(corpus.events, corpus.labels,
                                      corpus.features):
    stem = event_io.clip_stem(events.clip_id)
    event_io.write_feature_file(
        features, os.path.join(args.output_dir, 'features', stem + '.csv'))
    event_io.write_score_file(
        labels, os.path.join(args.output_dir, 'labels', stem + '.csv'))
    rows.append((events.clip_id, len(events.events)))
  return ('clip', 'events'), rows


def cmd_jitter(args):
  config = load_config(args)
  events = event_io.read_event_file(args.events)
  std = config.synth.annotation_jitter_std if args.std is None else args.std
  seed = config.synth.rng_seed if args.seed is None else args.seed
  jittered = synth.jitter_annotations(events, std, seed, args.clip_duration)
  event_io.write_event_file(jittered, args.output)
  return ('clip', 'events'), [(e.clip_id, len(e.events)) for e in jittered]


def cmd_train_toy(args):
  config = load_config(args)
  train_corpus, eval_corpus = experiment.build_corpora(config.synth)
  model = trainer.init_model(train_corpus.vocab, config.synth.feature_dim,
                             config.train.context, config.train.seed)
  result = trainer.train(model, train_corpus, config.train)
  trainer.write_model_file(result.model,
                           os.path.join(args.output_dir, 'model.txt'))
  output_formatter.write_csv(
      os.path.join(args.output_dir, 'loss_trace.csv'), TRACE_COLUMNS,
      [(epoch + 1,) + tuple(breakdown)
       for epoch, breakdown in enumerate(result.trace)])

  scores = trainer.predict_corpus(result.model, eval_corpus)
  report = metrics.evaluate(eval_corpus.events, scores,
                            config.postprocess, config.f1, config.psds1,
                            config.psds2)
  final_loss = result.trace[-1].total if result.trace else float('nan')
  return (('epochs', 'final_loss', 'event_f1', 'psds1', 'psds2'),
          [(config.train.epochs, final_loss, report.event_f1, report.psds1,
            report.psds2)])


def cmd_experiment(args):
  config = load_config(args)
  train_corpus, eval_corpus = experiment.build_corpora(config.synth)
  report = trainer.compare_losses(train_corpus, eval_corpus, config.train,
                                  config.eval_config(), args.seeds)
  output_formatter.write_csv(args.output, SUMMARY_COLUMNS, report.summaries)
  if args.runs_output:
    output_formatter.write_csv(args.runs_output, RUN_COLUMNS, report.runs)
  rows = [tuple(s) for s in report.summaries]
  rows.append((_GAIN_ROW,) + tuple(report.gains.values()))
  return SUMMARY_COLUMNS, rows


def cmd_sweep(args):
  config = load_config(args)
  train_corpus, eval_corpus = experiment.build_corpora(config.synth)
  rows = experiment.sweep(train_corpus, eval_corpus, config.train,
                          config.eval_config(), args.alpha, args.sigma,
                          args.seeds, args.protocol)
  output_formatter.write_csv(args.output, SWEEP_COLUMNS, rows)
  return SWEEP_COLUMNS, rows


def cmd_class_weights(args):
  if os.path.isdir(args.labels):
    hop = _frame_hop(args)
    files = event_io.list_frame_files(args.labels)
    if not files:
      raise sed_errors.ValidationError('No label files in %s' % args.labels)
    vocab = None
    corpus = []
    for _, path in files:
      labels = event_io.read_label_file(path, hop, vocab)
      vocab = labels.vocab
      corpus.append(labels)
    config = load_config(args, vocab)
  else:
    config, labeled = _read_events_as_labels(args)
    corpus = [labels for _, labels in labeled]

  stats = weighting.collect_class_stats(corpus, config.vocab)
  count_weights = weighting.count_class_weights(stats)
  effective_weights = weighting.effective_number_weights(
      stats, config.train.lam)
  rows = [(name, m, n, w, e) for name, m, n, w, e in zip(
      config.vocab.names, stats.event_counts, stats.frame_counts,
      count_weights, effective_weights)]
  output_formatter.write_csv(args.output, CLASS_WEIGHT_COLUMNS, rows)
  return CLASS_WEIGHT_COLUMNS, rows


def cmd_predict(args):
  model = trainer.read_model_file(args.model)
  config = load_config(args, model.vocab)
  files = event_io.list_frame_files(args.features)
  if not files:
    raise sed_errors.ValidationError('No feature files in %s' % args.features)
  rows = []
  for stem, path in files:
    scores = trainer.predict(model, event_io.read_feature_file(path),
                             config.frame_hop)
    event_io.write_score_file(scores,
                              os.path.join(args.output_dir, stem + '.csv'))
    rows.append((stem, scores.num_frames))
  return ('clip', 'frames'), rows


COMMANDS = {
    'weights': cmd_weights,
    'medfilt': cmd_medfilt,
    'decode': cmd_decode,
    'eval': cmd_eval,
    'synth': cmd_synth,
    'jitter': cmd_jitter,
    'train-toy': cmd_train_toy,
    'experiment': cmd_experiment,
    'sweep': cmd_sweep,
    'class-weights': cmd_class_weights,
    'predict': cmd_predict,
}


def sedkit_main(prog, argv):
  """Run one subcommand; returns the summary rows."""
  args = create_parser(prog).parse_args(argv)
  sed_util.set_verbose(args.verbose)
  # Fail early on a bad SEDKIT_THREADS.
  sed_util.get_thread_count()
  # Only the summary table goes to stdout.
  with sed_util.replace_print():
    columns, rows = COMMANDS[args.command](args)
  formatter = output_formatter.get_formatter(args.format)
  formatter.prepare_and_print_table(output_formatter.rows_to_table(columns,
                                                                   rows))
  return rows


def main(prog=None, argv=None):
  if prog is None and argv is None:
    prog = os.path.basename(sys.argv[0])
    argv = sys.argv[1:]

  try:
    sedkit_main(prog, argv)
  except (sed_errors.ParseError, OSError) as e:
    sed_util.print_error('%s: %s' % (type(e).__name__, str(e)))
    sys.exit(EXIT_PARSE_ERROR)
  except sed_errors.ValidationError as e:
    sed_util.print_error('%s: %s' % (type(e).__name__, str(e)))
    sys.exit(EXIT_VALIDATION_ERROR)
  except Exception as e:  # pylint: disable=broad-except
    sed_util.print_error('%s: %s' % (type(e).__name__, str(e)))
    sys.exit(EXIT_INTERNAL_ERROR)
  return EXIT_OK


if __name__ == '__main__':
  main()
