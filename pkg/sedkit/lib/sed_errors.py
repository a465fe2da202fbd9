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
"""Error classes for sedkit specific operations.

The command-line entry point maps these onto exit codes:
  ParseError (and OSError): 1
  ValidationError and subclasses: 2
  anything else: 3
"""


class SedError(Exception):
  """Base class for errors raised by sedkit."""

  def __init__(self, message):
    super(SedError, self).__init__(message)
    self.message = message


class ParseError(SedError):
  """Exception raised when an input file cannot be parsed."""

  def __init__(self, message, path=None, line_num=None):
    """Create a ParseError.

    Args:
        message: user-friendly message
        path: the file being parsed (optional)
        line_num: 1-based line number of the offending line (optional)
    """
    location = ''
    if path is not None and line_num is not None:
      location = '%s line %d: ' % (path, line_num)
    elif line_num is not None:
      location = 'line %d: ' % line_num
    elif path is not None:
      location = '%s: ' % path
    super(ParseError, self).__init__(location + message)
    self.path = path
    self.line_num = line_num


class ValidationError(SedError, ValueError):
  """A value violates an invariant of the sedkit data model."""
  pass


class VocabularyError(ValidationError):
  pass


class DimensionError(ValidationError):
  pass


class UndefinedStatisticError(ValidationError):
  pass


class ConfigError(ValidationError):
  """Invalid configuration value; the message names the offending key."""

  def __init__(self, key, message):
    super(ConfigError, self).__init__('%s: %s' % (key, message))
    self.key = key
    self.detail = message


class GenerationError(SedError):
  pass


class TrainingError(SedError):
  """Training produced a non-finite loss."""

  def __init__(self, message, epoch):
    super(TrainingError, self).__init__('epoch %d: %s' % (epoch, message))
    self.epoch = epoch
