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
"""Tests for sedkit.lib.frame_model."""

import unittest
from sedkit.lib import frame_model
from sedkit.lib import sed_errors
import numpy as np
import parameterized

HOP = 0.064
VOCAB = frame_model.ClassVocabulary(['dog', 'speech'])


def labels(values, vocab=VOCAB, hop=HOP):
  values = np.asarray(values, dtype=np.float64)
  return frame_model.LabelTensor(
      frame_model.FrameGrid(values.shape[0], hop), vocab, values)


class FrameGridTest(unittest.TestCase):

  def test_frame_to_time_is_rounded(self):
    grid = frame_model.FrameGrid(10, HOP)
    self.assertEqual(0.192, grid.frame_to_time(3))
    self.assertAlmostEqual(0.64, grid.duration)

  @parameterized.parameterized.expand([
      ('no_frames', 0, HOP),
      ('fractional_frames', 2.5, HOP),
      ('zero_hop', 5, 0.0),
      ('negative_hop', 5, -0.1),
      ('infinite_hop', 5, float('inf')),
  ])
  def test_invalid_grid(self, unused_name, num_frames, frame_hop):
    del unused_name
    with self.assertRaises(sed_errors.ValidationError):
      frame_model.FrameGrid(num_frames, frame_hop)

  @parameterized.parameterized.expand([
      ('exact', 0.64, 10),
      ('partial_frame', 0.65, 11),
      ('float_noise', 10 * 0.064, 10),
  ])
  def test_for_duration(self, unused_name, duration, expected):
    del unused_name
    self.assertEqual(expected,
                     frame_model.FrameGrid.for_duration(duration,
                                                        HOP).num_frames)


class ClassVocabularyTest(unittest.TestCase):

  def test_index_of(self):
    self.assertEqual(1, VOCAB.index_of('speech'))
    self.assertIn('dog', VOCAB)
    self.assertEqual(['dog', 'speech'], list(VOCAB))

  def test_unknown_class(self):
    with self.assertRaisesRegex(sed_errors.VocabularyError, 'cat'):
      VOCAB.index_of('cat')

  @parameterized.parameterized.expand([
      ('empty', []),
      ('duplicate', ['dog', 'dog']),
      ('blank', ['']),
  ])
  def test_invalid_vocabulary(self, unused_name, names):
    del unused_name
    with self.assertRaises(sed_errors.VocabularyError):
      frame_model.ClassVocabulary(names)

  def test_equality_is_ordered(self):
    self.assertEqual(VOCAB, frame_model.ClassVocabulary(['dog', 'speech']))
    self.assertNotEqual(VOCAB, frame_model.ClassVocabulary(['speech', 'dog']))


class FrameTensorTest(unittest.TestCase):

  def test_shape_mismatch(self):
    with self.assertRaises(sed_errors.DimensionError):
      labels(np.zeros((4, 3)))

  def test_non_finite(self):
    with self.assertRaises(sed_errors.ValidationError):
      frame_model.ScoreTensor(
          frame_model.FrameGrid(2, HOP), VOCAB, [[0.5, np.nan], [0, 0]])

  def test_out_of_range_names_class(self):
    with self.assertRaisesRegex(sed_errors.ValidationError, 'speech'):
      labels([[0.0, 1.5]])

  def test_values_are_read_only(self):
    tensor = labels([[0.0, 1.0]])
    with self.assertRaises(ValueError):
      tensor.values[0, 0] = 1.0

  def test_is_binary(self):
    self.assertTrue(labels([[0.0, 1.0]]).is_binary())
    self.assertFalse(labels([[0.0, 0.7]]).is_binary())

  def test_check_compatible(self):
    with self.assertRaises(sed_errors.DimensionError):
      frame_model.check_compatible(labels(np.zeros((3, 2))),
                                   labels(np.zeros((4, 2))))
    other = frame_model.ClassVocabulary(['a', 'b'])
    with self.assertRaises(sed_errors.DimensionError):
      frame_model.check_compatible(
          labels(np.zeros((3, 2))), labels(np.zeros((3, 2)), vocab=other))


class EventTest(unittest.TestCase):

  @parameterized.parameterized.expand([
      ('negative_onset', 'dog', -0.1, 1.0),
      ('empty_event', 'dog', 1.0, 1.0),
      ('reversed', 'dog', 2.0, 1.0),
      ('no_label', '', 0.0, 1.0),
      ('nan', 'dog', 0.0, float('nan')),
  ])
  def test_invalid_event(self, unused_name, class_name, onset, offset):
    del unused_name
    with self.assertRaises(sed_errors.ValidationError):
      frame_model.Event(class_name, onset, offset)

  def test_event_list_is_sorted(self):
    event_list = frame_model.EventList('a.wav', [
        frame_model.Event('speech', 0.0, 1.0),
        frame_model.Event('dog', 2.0, 3.0),
        frame_model.Event('dog', 0.5, 1.0),
    ])
    self.assertEqual([('dog', 0.5), ('dog', 2.0), ('speech', 0.0)],
                     [(e.class_name, e.onset) for e in event_list.events])
    self.assertEqual(['dog', 'speech'], event_list.class_names())
    self.assertEqual(2, len(event_list.for_class('dog')))


class RasterizeTest(unittest.TestCase):

  def test_events_to_labels_half_frame_rule(self):
    grid = frame_model.FrameGrid(4, HOP)
    events = frame_model.EventList('a.wav', [
        frame_model.Event('dog', 0.1, 0.2),
        frame_model.Event('speech', 0.064, 0.256),
    ])
    result = frame_model.events_to_labels(events, grid, VOCAB)
    np.testing.assert_array_equal([0, 0, 1, 0], result.column('dog'))
    np.testing.assert_array_equal([0, 1, 1, 1], result.column('speech'))

  def test_events_to_labels_clips_offset(self):
    grid = frame_model.FrameGrid(3, HOP)
    events = frame_model.EventList('a.wav',
                                   [frame_model.Event('dog', 0.07, 5.0)])
    result = frame_model.events_to_labels(events, grid, VOCAB)
    np.testing.assert_array_equal([0, 1, 1], result.column('dog'))

  def test_adding_an_event_never_deactivates_a_frame(self):
    rng = np.random.default_rng(21)
    grid = frame_model.FrameGrid(40, HOP)

    def random_event():
      onset = float(rng.uniform(0, 2.5))
      return frame_model.Event(str(rng.choice(['dog', 'speech'])), onset,
                               onset + float(rng.uniform(0.01, 0.8)))

    for _ in range(200):
      events = [random_event() for _ in range(int(rng.integers(0, 5)))]
      extra = random_event()
      before = frame_model.events_to_labels(
          frame_model.EventList('a.wav', events), grid, VOCAB)
      after = frame_model.events_to_labels(
          frame_model.EventList('a.wav', events + [extra]), grid, VOCAB)
      self.assertTrue(np.all(after.values >= before.values))
      alone = frame_model.events_to_labels(
          frame_model.EventList('a.wav', [extra]), grid, VOCAB)
      np.testing.assert_array_equal(
          np.maximum(before.values, alone.values), after.values)

  def test_events_to_labels_unknown_class(self):
    events = frame_model.EventList('a.wav',
                                   [frame_model.Event('cat', 0.0, 1.0)])
    with self.assertRaises(sed_errors.VocabularyError):
      frame_model.events_to_labels(events, frame_model.FrameGrid(4, HOP),
                                   VOCAB)

  @parameterized.parameterized.expand([
      ('empty', [0, 0, 0], []),
      ('full', [1, 1], [(0, 2)]),
      ('two_runs', [0, 1, 1, 0, 1], [(1, 3), (4, 5)]),
      ('soft_values', [0.2, 0.0, 0.7], [(0, 1), (2, 3)]),
  ])
  def test_active_runs(self, unused_name, column, expected):
    del unused_name
    self.assertEqual(expected, frame_model.active_runs(column))

  def test_labels_to_events(self):
    tensor = labels([[0, 1], [1, 1], [1, 0], [0, 0], [1, 0]])
    result = frame_model.labels_to_events(tensor, 'a.wav')
    self.assertEqual('a.wav', result.clip_id)
    self.assertEqual([
        frame_model.Event('dog', 0.064, 0.192),
        frame_model.Event('dog', 0.256, 0.32),
        frame_model.Event('speech', 0.0, 0.128),
    ], list(result.events))

  def test_labels_to_events_rejects_soft_labels(self):
    with self.assertRaises(sed_errors.ValidationError):
      frame_model.labels_to_events(labels([[0.7, 0.0]]))

  def test_labels_to_events_binarize_is_strict(self):
    tensor = labels([[0.5, 0.0], [0.51, 0.0]])
    result = frame_model.labels_to_events(tensor, binarize=True)
    self.assertEqual([frame_model.Event('dog', 0.064, 0.128)],
                     list(result.events))

  def test_round_trip(self):
    rng = np.random.default_rng(3)
    for _ in range(20):
      tensor = labels((rng.random((40, 2)) > 0.6).astype(np.float64))
      events = frame_model.labels_to_events(tensor, 'a.wav')
      again = frame_model.events_to_labels(events, tensor.grid, VOCAB)
      np.testing.assert_array_equal(tensor.values, again.values)


if __name__ == '__main__':
  unittest.main()
