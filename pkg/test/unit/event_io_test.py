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
"""Tests for sedkit.lib.event_io."""

import os
import shutil
import tempfile
import unittest
from sedkit.lib import event_io
from sedkit.lib import frame_model
from sedkit.lib import sed_errors
from sedkit.lib import weighting
import numpy as np
import parameterized

HOP = 0.064
TESTDATA = os.path.join(os.path.dirname(__file__), '../testdata')


class EventFileTest(unittest.TestCase):

  def setUp(self):
    super(EventFileTest, self).setUp()
    self.tmpdir = tempfile.mkdtemp()

  def tearDown(self):
    shutil.rmtree(self.tmpdir)
    super(EventFileTest, self).tearDown()

  def _write(self, name, contents):
    path = os.path.join(self.tmpdir, name)
    with open(path, 'w') as f:
      f.write(contents)
    return path

  def test_read_testdata(self):
    event_lists = event_io.read_event_file(
        os.path.join(TESTDATA, 'refs.tsv'))
    self.assertEqual(['a.wav', 'b.wav'], [e.clip_id for e in event_lists])
    self.assertEqual([
        frame_model.Event('dog', 0.128, 0.384),
        frame_model.Event('speech', 0.192, 0.512)
    ], list(event_lists[0].events))
    self.assertEqual((), event_lists[1].events)

  def test_round_trip_keeps_event_free_clips(self):
    event_lists = [
        frame_model.EventList('b.wav'),
        frame_model.EventList('a.wav',
                              [frame_model.Event('dog', 0.0, 1.5)]),
    ]
    path = os.path.join(self.tmpdir, 'out.tsv')
    event_io.write_event_file(event_lists, path)
    with open(path) as f:
      self.assertEqual(
          'filename\tonset\toffset\tevent_label\n'
          'a.wav\t0.000\t1.500\tdog\n'
          'b.wav\t\t\t\n', f.read())
    self.assertEqual(sorted(event_lists), event_io.read_event_file(path))

  @parameterized.parameterized.expand([
      ('wrong_header', 'file\tonset\toffset\tevent_label\n', 1),
      ('missing_field', 'filename\tonset\toffset\tevent_label\n'
       'a.wav\t0.0\t1.0\n', 2),
      ('bad_number', 'filename\tonset\toffset\tevent_label\n'
       'a.wav\t0.0\tlate\tdog\n', 2),
      ('partial_row', 'filename\tonset\toffset\tevent_label\n'
       'a.wav\t0.0\t\tdog\n', 2),
      ('blank_line', 'filename\tonset\toffset\tevent_label\n\n'
       'a.wav\t0.0\t1.0\tdog\n', 2),
  ])
  def test_parse_errors(self, unused_name, contents, line_num):
    del unused_name
    path = self._write('bad.tsv', contents)
    with self.assertRaises(sed_errors.ParseError) as context:
      event_io.read_event_file(path)
    self.assertEqual(line_num, context.exception.line_num)
    self.assertIn('line %d' % line_num, str(context.exception))

  def test_invalid_event_is_validation_error(self):
    path = self._write(
        'bad.tsv', 'filename\tonset\toffset\tevent_label\n'
        'a.wav\t2.0\t1.0\tdog\n')
    with self.assertRaisesRegex(sed_errors.ValidationError, 'line 2'):
      event_io.read_event_file(path)

  def test_missing_file(self):
    with self.assertRaises(OSError):
      event_io.read_event_file(os.path.join(self.tmpdir, 'missing.tsv'))

  @parameterized.parameterized.expand([
      ('wav', 'a.wav', 'a'),
      ('directory', 'audio/b.flac', 'b'),
      ('no_extension', 'c', 'c'),
  ])
  def test_clip_stem(self, unused_name, clip_id, expected):
    del unused_name
    self.assertEqual(expected, event_io.clip_stem(clip_id))


class FrameFileTest(unittest.TestCase):

  def setUp(self):
    super(FrameFileTest, self).setUp()
    self.tmpdir = tempfile.mkdtemp()

  def tearDown(self):
    shutil.rmtree(self.tmpdir)
    super(FrameFileTest, self).tearDown()

  def _write(self, name, contents):
    path = os.path.join(self.tmpdir, name)
    with open(path, 'w') as f:
      f.write(contents)
    return path

  def test_read_score_testdata(self):
    scores = event_io.read_score_file(
        os.path.join(TESTDATA, 'scores', 'a.csv'), HOP)
    self.assertEqual(('dog', 'speech'), scores.vocab.names)
    self.assertEqual(10, scores.num_frames)
    np.testing.assert_array_equal([0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
                                  scores.column('dog'))

  def test_write_score_file_format(self):
    vocab = frame_model.ClassVocabulary(['dog'])
    scores = frame_model.ScoreTensor(
        frame_model.FrameGrid(2, HOP), vocab, [[0.25], [1.0]])
    path = os.path.join(self.tmpdir, 'a.csv')
    event_io.write_score_file(scores, path)
    with open(path) as f:
      self.assertEqual('frame_index,dog\n0,0.250000\n1,1.000000\n', f.read())

  def test_mask_file_is_tagged(self):
    vocab = frame_model.ClassVocabulary(['dog'])
    mask = weighting.WeightMask(
        frame_model.FrameGrid(2, HOP), vocab, [[1.0], [13.0]])
    path = os.path.join(self.tmpdir, 'mask.csv')
    event_io.write_score_file(mask, path)
    with open(path) as f:
      self.assertTrue(f.read().startswith('# mask\nframe_index,dog\n'))
    np.testing.assert_array_equal(mask.values,
                                  event_io.read_mask_file(path, HOP).values)
    with self.assertRaisesRegex(sed_errors.ValidationError, 'weight mask'):
      event_io.read_score_file(path, HOP)

  @parameterized.parameterized.expand([
      ('bad_header', 'frame,dog\n0,0.5\n', 1),
      ('out_of_order', 'frame_index,dog\n0,0.5\n2,0.5\n', 3),
      ('ragged', 'frame_index,dog\n0,0.5,0.1\n', 2),
      ('not_a_number', 'frame_index,dog\n0,high\n', 2),
  ])
  def test_parse_errors(self, unused_name, contents, line_num):
    del unused_name
    path = self._write('bad.csv', contents)
    with self.assertRaises(sed_errors.ParseError) as context:
      event_io.read_score_file(path, HOP)
    self.assertEqual(line_num, context.exception.line_num)

  def test_out_of_range_score(self):
    path = self._write('bad.csv', 'frame_index,dog\n0,1.5\n')
    with self.assertRaisesRegex(sed_errors.ValidationError, 'bad.csv'):
      event_io.read_score_file(path, HOP)

  def test_no_frames(self):
    path = self._write('empty.csv', 'frame_index,dog\n')
    with self.assertRaises(sed_errors.ValidationError):
      event_io.read_score_file(path, HOP)

  def test_vocabulary_mismatch(self):
    path = self._write('a.csv', 'frame_index,dog\n0,0.5\n')
    with self.assertRaises(sed_errors.VocabularyError):
      event_io.read_score_file(path, HOP,
                               frame_model.ClassVocabulary(['speech']))

  def test_feature_file(self):
    features = np.array([[0.5, -1.25], [2.0, 0.0]])
    path = os.path.join(self.tmpdir, 'features', 'a.csv')
    event_io.write_feature_file(features, path)
    np.testing.assert_allclose(features, event_io.read_feature_file(path))

  def test_list_frame_files(self):
    for name in ('b.csv', 'a.csv', 'notes.txt'):
      self._write(name, '')
    self.assertEqual(['a', 'b'],
                     [stem for stem, _ in
                      event_io.list_frame_files(self.tmpdir)])


if __name__ == '__main__':
  unittest.main()
