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
"""Utility functions used across the sedkit library and command."""

import concurrent.futures
import contextlib
import datetime
import os
import sys

from . import sed_errors

# Environment variable which caps the number of worker threads.
THREADS_ENV_VAR = 'SEDKIT_THREADS'

_VERBOSE = False


class _Printer(object):
  """File-like stream object that redirects stdout to a file object."""

  def __init__(self, fileobj):
    self._actual_stdout = sys.stdout
    self._fileobj = fileobj

  def write(self, buf):
    self._fileobj.write(buf)

  def flush(self):
    self._fileobj.flush()


@contextlib.contextmanager
def replace_print(fileobj=sys.stderr):
  """Sys.out replacer, by default with stderr.

  Use it like this:
  with replace_print(fileobj):
    print('hello')  # writes to the file
  print('done')  # prints to stdout

  Args:
    fileobj: a file object to replace stdout.

  Yields:
    The printer.
  """
  printer = _Printer(fileobj)

  previous_stdout = sys.stdout
  sys.stdout = printer
  try:
    yield printer
  finally:
    sys.stdout = previous_stdout


def print_error(msg):
  """Utility routine to emit messages to stderr."""
  print(msg, file=sys.stderr)


def set_verbose(verbose):
  global _VERBOSE
  _VERBOSE = bool(verbose)


def log_progress(msg):
  """Emit a timestamped progress message to stderr when verbose is enabled."""
  if not _VERBOSE:
    return
  now = datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S.%f')
  print_error('{}: {}'.format(now, msg))


def load_file(file_path):
  """Load the contents of a local UTF-8 text file.

  Args:
    file_path: path to the file.

  Returns:
    The content of the text file as a string.
  """
  with open(file_path, 'r', encoding='utf-8', newline='') as f:
    return f.read()


def write_file(file_path, contents):
  """Write text with '\\n' line endings, creating parent directories."""
  dirname = os.path.dirname(file_path)
  if dirname:
    os.makedirs(dirname, exist_ok=True)
  with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
    f.write(contents)


def get_thread_count(environ=None):
  """Returns the worker thread cap from SEDKIT_THREADS (None means auto).

  Args:
    environ: mapping to read from (defaults to os.environ).

  Raises:
    ConfigError: if the variable is not a non-negative integer.
  """
  environ = os.environ if environ is None else environ
  value = environ.get(THREADS_ENV_VAR, '').strip()
  if not value:
    return None
  try:
    threads = int(value)
  except ValueError:
    raise sed_errors.ConfigError(THREADS_ENV_VAR,
                                 'not an integer: %r' % value) from None
  if threads < 0:
    raise sed_errors.ConfigError(THREADS_ENV_VAR,
                                 'must be >= 0, got %d' % threads)
  return threads or None


def parallel_map(fn, items):
  """Apply fn to every item, possibly in parallel, preserving input order.

  Results are returned in input order, so output is identical for any
  SEDKIT_THREADS setting.

  Args:
    fn: a function of one argument.
    items: an iterable of arguments.

  Returns:
    list of fn(item) in the order of items.
  """
  items = list(items)
  threads = get_thread_count()
  if threads == 1 or len(items) <= 1:
    return [fn(item) for item in items]
  with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
    return list(executor.map(fn, items))
