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
"""CSV result files and stdout summaries in text, JSON or YAML.

CSV files are the artifacts of every command: fixed column order, floats
with 6 decimals and "\n" line endings. The stdout summary of a command is
the same table rendered by one of the OutputFormatter classes.
"""
import collections
import csv
import io
import json
import math
import numbers

from . import sed_util
import tabulate
import yaml

FLOAT_FORMAT = '%.6f'

FORMATS = ('text', 'json', 'yaml')


def format_value(value):
  """Render one CSV cell."""
  if isinstance(value, bool):
    return str(int(value))
  if isinstance(value, numbers.Integral):
    return str(int(value))
  if isinstance(value, numbers.Real):
    value = float(value)
    if math.isnan(value):
      return 'nan'
    return FLOAT_FORMAT % value
  return str(value)


def format_csv(columns, rows):
  """Format rows (sequences in column order) as CSV text with a header."""
  buf = io.StringIO()
  writer = csv.writer(buf, lineterminator='\n')
  writer.writerow(columns)
  for row in rows:
    if len(row) != len(columns):
      raise ValueError('Row %r does not have %d columns' % (row, len(columns)))
    writer.writerow([format_value(v) for v in row])
  return buf.getvalue()


def write_csv(path, columns, rows):
  sed_util.write_file(path, format_csv(columns, rows))


def rows_to_table(columns, rows):
  """Returns a list of OrderedDicts, one per row."""
  return [collections.OrderedDict(zip(columns, row)) for row in rows]


def _plain(value):
  """Convert numpy scalars to Python values; NaN becomes None."""
  if isinstance(value, bool) or value is None:
    return value
  if isinstance(value, numbers.Integral):
    return int(value)
  if isinstance(value, numbers.Real):
    value = float(value)
    return None if math.isnan(value) else value
  return value


class OutputFormatter(object):
  """Base class for supported output formats."""

  def prepare_output(self, row):
    return collections.OrderedDict((k, _plain(v)) for k, v in row.items())

  def print_table(self, table):
    """Function to be defined by the derived class to print output."""
    raise NotImplementedError('print_table method not defined!')

  def prepare_and_print_table(self, rows):
    """Wrapper for prepare_output and print_table."""
    self.print_table([self.prepare_output(row) for row in rows])


class TextOutput(OutputFormatter):
  """Format output for text display."""

  def print_table(self, table):
    if not table:
      print('')
    else:
      print(tabulate.tabulate(table, headers='keys', floatfmt='.6f',
                              missingval='nan'))
    print('')


class YamlOutput(OutputFormatter):
  """Format output for YAML display."""

  def __init__(self):
    super(YamlOutput, self).__init__()
    yaml.add_representer(collections.OrderedDict, self.dict_representer)

  def dict_representer(self, dumper, data):
    return dumper.represent_dict(list(data.items()))

  def print_table(self, table):
    print(yaml.dump(table, default_flow_style=False))


class JsonOutput(OutputFormatter):
  """Format output for JSON display."""

  def print_table(self, table):
    print(json.dumps(table, indent=2, separators=(',', ': ')))


def get_formatter(name):
  if name == 'text':
    return TextOutput()
  elif name == 'json':
    return JsonOutput()
  elif name == 'yaml':
    return YamlOutput()
  raise ValueError('Unsupported format: %r' % name)
