import json
import os
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_array_equal

from crpmnet.output.class_map import colorize, load_palette, read_pgm, write_pgm, write_ppm
from crpmnet.shared.exceptions import ConfigError, IncompatibleDataError


class ClassMapTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_pgm_layout(self):
        write_pgm(self.path("map.pgm"), np.array([[1, 2, 3], [0, 4, 5]]))
        with open(self.path("map.pgm"), "rb") as file_obj:
            data = file_obj.read()
        self.assertEqual(data, b"P5\n3 2\n255\n" + bytes([1, 2, 3, 0, 4, 5]))

    def test_pgm_read_back(self):
        values = np.random.default_rng(0).integers(0, 16, size=(9, 11))
        write_pgm(self.path("map.pgm"), values)
        assert_array_equal(read_pgm(self.path("map.pgm")), values)

    def test_pgm_header_comments(self):
        with open(self.path("map.pgm"), "wb") as file_obj:
            file_obj.write(b"P5\n# written elsewhere\n2 1\n255\n" + bytes([7, 8]))
        assert_array_equal(read_pgm(self.path("map.pgm")), [[7, 8]])

    def test_pgm_short_payload(self):
        with open(self.path("map.pgm"), "wb") as file_obj:
            file_obj.write(b"P5\n2 2\n255\n" + bytes([7, 8, 9]))
        with self.assertRaises(IncompatibleDataError):
            read_pgm(self.path("map.pgm"))

    def test_not_a_pgm(self):
        with open(self.path("map.pgm"), "wb") as file_obj:
            file_obj.write(b"P6\n1 1\n255\n" + bytes(3))
        with self.assertRaises(IncompatibleDataError):
            read_pgm(self.path("map.pgm"))

    def test_class_index_out_of_range(self):
        with self.assertRaises(IncompatibleDataError):
            write_pgm(self.path("map.pgm"), np.array([[256]]))

    def test_default_palette(self):
        palette = load_palette()
        self.assertEqual(palette[0], (0, 0, 0))
        self.assertEqual(len(palette), 16)

    def test_custom_palette(self):
        with open(self.path("palette.json"), "w", encoding="utf-8") as file_obj:
            json.dump({"1": [1, 2, 3], "2": [4, 5, 6]}, file_obj)
        palette = load_palette(self.path("palette.json"))
        rgb = colorize(np.array([[1, 2]]), palette)
        assert_array_equal(rgb, [[[1, 2, 3], [4, 5, 6]]])

    def test_malformed_palette(self):
        with open(self.path("palette.json"), "w", encoding="utf-8") as file_obj:
            json.dump({"1": [1, 2]}, file_obj)
        with self.assertRaises(ConfigError):
            load_palette(self.path("palette.json"))

    def test_missing_colour_is_black(self):
        with self.assertLogs("crpmnet.output.class_map", level="WARNING"):
            rgb = colorize(np.array([[1, 9]]), {1: (10, 20, 30)})
        assert_array_equal(rgb[0, 1], [0, 0, 0])

    def test_ppm_layout(self):
        rgb = colorize(np.array([[1], [2]]), load_palette())
        write_ppm(self.path("map.ppm"), rgb)
        with open(self.path("map.ppm"), "rb") as file_obj:
            data = file_obj.read()
        self.assertEqual(data, b"P6\n1 2\n255\n" + bytes([230, 25, 75, 60, 180, 75]))
