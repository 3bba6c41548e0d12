import json
import os
import shlex
import tempfile
import unittest

import numpy as np
from click.testing import CliRunner

from crpmnet.command.evaluate import evaluate
from crpmnet.output.class_map import write_pgm


class EvaluateClickUnitTests(unittest.TestCase):
    def setUp(self):
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.labels = os.path.join(self.tmp.name, "labels.pgm")
        self.pred = os.path.join(self.tmp.name, "pred.pgm")

    def tearDown(self):
        self.tmp.cleanup()

    def test_perfect_prediction_with_click(self):
        """crpmnet.command.evaluate: a prediction equal to the labels scores 1.0"""
        labels = np.random.default_rng(0).integers(1, 4, size=(10, 12))
        write_pgm(self.labels, labels)
        write_pgm(self.pred, labels)
        report = os.path.join(self.tmp.name, "metrics.json")
        command = f"--pred {self.pred} --labels {self.labels} --report {report}"
        response = self.runner.invoke(cli=evaluate, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        results = json.loads(response.output)
        self.assertEqual(results["oa"], 1.0)
        self.assertEqual(results["kappa"], 1.0)
        self.assertEqual(results["fwiou"], 1.0)
        with open(report, encoding="utf-8") as file_obj:
            self.assertEqual(json.load(file_obj), results)

    def test_fixture_matrix(self):
        """crpmnet.command.evaluate: 40/10/20/30 counts give OA 0.70 and Kappa 0.40"""
        labels = np.array([1] * 50 + [2] * 50 + [0] * 20).reshape(8, 15)
        pred = np.array([1] * 40 + [2] * 10 + [1] * 20 + [2] * 30 + [2] * 20).reshape(8, 15)
        write_pgm(self.labels, labels)
        write_pgm(self.pred, pred)
        html = os.path.join(self.tmp.name, "report.html")
        command = f"-p {self.pred} -l {self.labels} --html {html}"
        response = self.runner.invoke(cli=evaluate, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        self.assertIn('"oa": 0.7', response.output)
        self.assertIn('"kappa": 0.4', response.output)
        with open(html, encoding="utf-8") as file_obj:
            self.assertIn("0.535714", file_obj.read())

    def test_no_labeled_pixels(self):
        """crpmnet.command.evaluate: an empty confusion matrix exits with 4"""
        write_pgm(self.labels, np.zeros((4, 4), dtype=np.uint8))
        write_pgm(self.pred, np.ones((4, 4), dtype=np.uint8))
        response = self.runner.invoke(cli=evaluate, args=shlex.split(f"-p {self.pred} -l {self.labels}"))
        self.assertEqual(response.exit_code, 4)
        self.assertIn("error=EmptyMatrixError exit=4", response.output)

    def test_size_mismatch(self):
        write_pgm(self.labels, np.ones((4, 4), dtype=np.uint8))
        write_pgm(self.pred, np.ones((4, 5), dtype=np.uint8))
        response = self.runner.invoke(cli=evaluate, args=shlex.split(f"-p {self.pred} -l {self.labels}"))
        self.assertEqual(response.exit_code, 4)
