import unittest

from click.testing import CliRunner

from crpmnet.bin.cli import crpmnet
from crpmnet.bin.version import __version__


class CliGroupTestCase(unittest.TestCase):
    def setUp(self):
        self.runner = CliRunner()

    def test_commands_are_registered(self):
        response = self.runner.invoke(cli=crpmnet, args=["--help"])
        self.assertEqual(response.exit_code, 0)
        for name in ("synth", "train", "predict", "evaluate", "gradcheck", "benchmark"):
            self.assertIn(name, response.output)

    def test_version(self):
        response = self.runner.invoke(cli=crpmnet, args=["--version"])
        self.assertEqual(response.exit_code, 0)
        self.assertIn(__version__, response.output)

    def test_unknown_option_is_a_usage_error(self):
        response = self.runner.invoke(cli=crpmnet, args=["synth", "--frobnicate"])
        self.assertEqual(response.exit_code, 2)
