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
"""Readers and writers for sedkit's text file formats.

Event files (TSV, DCASE convention), one row per event:

  filename<TAB>onset<TAB>offset<TAB>event_label
  a.wav<TAB>0.500<TAB>1.000<TAB>Speech

A row with empty onset, offset and event_label declares a clip without
events.

Frame tables (CSV), one row per frame, frame_index counting from 0:

  frame_index,Speech,Dog
  0,0.100000,0.000000

Score and label files use class names as columns and values in [0, 1].
Weight mask files start with a "# mask" line, which relaxes the range check
(mask values are >= 0). Feature files use f0, f1, ... as columns.

The frame hop is not stored in frame tables; callers supply it.
"""

import csv
import io
import math
import os

from . import frame_model
from . import sed_errors
from . import sed_util
from . import weighting
import numpy as np

EVENT_FILE_HEADER = ('filename', 'onset', 'offset', 'event_label')
FRAME_INDEX_COLUMN = 'frame_index'
MASK_TAG = 'mask'

_EVENT_TIME_FORMAT = '%.3f'
_FRAME_VALUE_FORMAT = '%.6f'


def clip_stem(clip_id):
  """Returns the file stem used for per-clip frame tables ('a.wav' -> 'a')."""
  return os.path.splitext(os.path.basename(clip_id))[0]


def _parse_float(value, path, line_num, column):
  try:
    result = float(value)
  except ValueError:
    raise sed_errors.ParseError(
        'Invalid %s value: %r' % (column, value), path, line_num) from None
  if not math.isfinite(result):
    raise sed_errors.ParseError('Non-finite %s value: %r' % (column, value),
                                path, line_num)
  return result


def _text_lines(path):
  contents = sed_util.load_file(path)
  lines = contents.split('\n')
  if lines and lines[-1] == '':
    lines.pop()
  for line_num, line in enumerate(lines, 1):
    if not line.strip():
      raise sed_errors.ParseError('Blank line found', path, line_num)
  return lines


def read_event_file(path):
  """Parses an event TSV file.

  Args:
    path: path of the TSV file.

  Returns:
    list of EventList, one per filename, sorted by clip_id.

  Raises:
    ParseError: missing or wrong header, wrong number of fields, or values
      that are not numbers.
    ValidationError: an event with onset >= offset or a negative onset.
  """
  lines = _text_lines(path)
  if not lines:
    raise sed_errors.ParseError('Missing header', path, 1)

  reader = csv.reader(lines, delimiter='\t', quoting=csv.QUOTE_NONE)
  header = next(reader)
  if tuple(header) != EVENT_FILE_HEADER:
    raise sed_errors.ParseError(
        'Expected header %r, found %r' % ('\t'.join(EVENT_FILE_HEADER),
                                          '\t'.join(header)), path, 1)

  clips = {}
  for row in reader:
    line_num = reader.line_num
    if len(row) != len(EVENT_FILE_HEADER):
      raise sed_errors.ParseError(
          'Unexpected number of fields %d vs %d' %
          (len(row), len(EVENT_FILE_HEADER)), path, line_num)
    filename, onset, offset, label = row
    if not filename:
      raise sed_errors.ParseError('Empty filename', path, line_num)
    events = clips.setdefault(filename, [])

    # An event-free clip is declared with empty onset, offset and label.
    if not onset and not offset and not label:
      continue
    if not onset or not offset or not label:
      raise sed_errors.ParseError('Incomplete event row', path, line_num)

    onset = _parse_float(onset, path, line_num, 'onset')
    offset = _parse_float(offset, path, line_num, 'offset')
    try:
      events.append(frame_model.Event(label, onset, offset))
    except sed_errors.ValidationError as e:
      raise sed_errors.ValidationError('%s line %d: %s' %
                                       (path, line_num, e)) from None

  return [
      frame_model.EventList(clip_id, clips[clip_id])
      for clip_id in sorted(clips)
  ]


def format_event_file(event_lists):
  """Returns the TSV text for a list of EventList."""
  buf = io.StringIO()
  writer = csv.writer(
      buf, delimiter='\t', lineterminator='\n', quoting=csv.QUOTE_NONE)
  writer.writerow(EVENT_FILE_HEADER)
  for event_list in sorted(event_lists, key=lambda el: el.clip_id):
    if not event_list.events:
      writer.writerow([event_list.clip_id, '', '', ''])
      continue
    for event in event_list.events:
      writer.writerow([
          event_list.clip_id, _EVENT_TIME_FORMAT % event.onset,
          _EVENT_TIME_FORMAT % event.offset, event.class_name
      ])
  return buf.getvalue()


def write_event_file(event_lists, path):
  sed_util.write_file(path, format_event_file(event_lists))


def _read_frame_table(path):
  """Parses a frame table CSV.

  Returns:
    (tag, column names, values array of shape (N, columns)), where tag is
    the text of a leading "# ..." line or None.
  """
  lines = _text_lines(path)
  tag = None
  first_line = 1
  if lines and lines[0].startswith('#'):
    tag = lines[0][1:].strip()
    lines = lines[1:]
    first_line = 2
  if not lines:
    raise sed_errors.ParseError('Missing header', path, first_line)

  reader = csv.reader(lines)
  header = next(reader)
  if not header or header[0] != FRAME_INDEX_COLUMN:
    raise sed_errors.ParseError(
        'Header must start with %r' % FRAME_INDEX_COLUMN, path, first_line)
  names = header[1:]
  if not names:
    raise sed_errors.ParseError('Header has no value columns', path,
                                first_line)

  rows = []
  for row in reader:
    line_num = reader.line_num + first_line - 1
    if len(row) != len(header):
      raise sed_errors.ParseError(
          'Unexpected number of fields %d vs %d' % (len(row), len(header)),
          path, line_num)
    try:
      frame_index = int(row[0])
    except ValueError:
      raise sed_errors.ParseError('Invalid frame_index: %r' % row[0], path,
                                  line_num) from None
    if frame_index != len(rows):
      raise sed_errors.ParseError(
          'frame_index %d out of order (expected %d)' %
          (frame_index, len(rows)), path, line_num)
    rows.append([
        _parse_float(value, path, line_num, name)
        for name, value in zip(names, row[1:])
    ])

  if not rows:
    raise sed_errors.ValidationError('%s: no frames (N >= 1 required)' % path)
  return tag, names, np.array(rows, dtype=np.float64)


def _check_vocab(names, vocab, path):
  file_vocab = frame_model.ClassVocabulary(names)
  if vocab is not None and file_vocab != vocab:
    raise sed_errors.VocabularyError(
        '%s: columns %s do not match classes %s' %
        (path, list(file_vocab.names), list(vocab.names)))
  return file_vocab


def _read_tensor(path, frame_hop, vocab, tensor_class):
  tag, names, values = _read_frame_table(path)
  if tag == MASK_TAG:
    raise sed_errors.ValidationError(
        '%s is a weight mask file, not a %s file' % (path,
                                                     tensor_class.__name__))
  file_vocab = _check_vocab(names, vocab, path)
  grid = frame_model.FrameGrid(values.shape[0], frame_hop)
  try:
    return tensor_class(grid, file_vocab, values)
  except sed_errors.ValidationError as e:
    raise sed_errors.ValidationError('%s: %s' % (path, e)) from None


def read_score_file(path, frame_hop, vocab=None):
  """Reads a ScoreTensor from a score CSV.

  Args:
    path: path of the CSV file.
    frame_hop: seconds per frame (not stored in the file).
    vocab: optional ClassVocabulary the columns must match.

  Returns:
    A ScoreTensor.
  """
  return _read_tensor(path, frame_hop, vocab, frame_model.ScoreTensor)


def read_label_file(path, frame_hop, vocab=None):
  """Reads a LabelTensor from a CSV in the score file format."""
  return _read_tensor(path, frame_hop, vocab, frame_model.LabelTensor)


def read_mask_file(path, frame_hop, vocab=None):
  """Reads a WeightMask from a CSV starting with a "# mask" line."""
  tag, names, values = _read_frame_table(path)
  if tag != MASK_TAG:
    raise sed_errors.ParseError('Missing "# %s" line' % MASK_TAG, path, 1)
  file_vocab = _check_vocab(names, vocab, path)
  grid = frame_model.FrameGrid(values.shape[0], frame_hop)
  return weighting.WeightMask(grid, file_vocab, values)


def _format_frame_table(names, values, tag=None):
  buf = io.StringIO()
  if tag:
    buf.write('# %s\n' % tag)
  writer = csv.writer(buf, lineterminator='\n')
  writer.writerow([FRAME_INDEX_COLUMN] + list(names))
  for n, row in enumerate(values):
    writer.writerow([str(n)] + [_FRAME_VALUE_FORMAT % v for v in row])
  return buf.getvalue()


def format_score_file(tensor):
  """Returns the CSV text for a score, label or weight mask tensor."""
  tag = MASK_TAG if isinstance(tensor, weighting.WeightMask) else None
  return _format_frame_table(tensor.vocab.names, tensor.values, tag)


def write_score_file(tensor, path):
  sed_util.write_file(path, format_score_file(tensor))


def feature_column_names(feature_dim):
  return ['f%d' % i for i in range(feature_dim)]


def read_feature_file(path):
  """Reads an N x D feature matrix from a feature CSV."""
  tag, names, values = _read_frame_table(path)
  if names != feature_column_names(len(names)):
    raise sed_errors.ParseError(
        'Feature columns must be f0..f%d' % (len(names) - 1), path, 1)
  del tag
  return values


def write_feature_file(features, path):
  features = np.asarray(features, dtype=np.float64)
  sed_util.write_file(
      path,
      _format_frame_table(feature_column_names(features.shape[1]), features))


def list_frame_files(directory):
  """Returns sorted (stem, path) pairs for the *.csv files in a directory."""
  entries = []
  for name in sorted(os.listdir(directory)):
    if name.endswith('.csv'):
      entries.append((clip_stem(name), os.path.join(directory, name)))
  return entries
