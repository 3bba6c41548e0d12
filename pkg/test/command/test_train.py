import json
import logging
import os
import shlex
import tempfile
import unittest
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from crpmnet.command.predict import predict
from crpmnet.command.train import attach_training_log, detach_training_log, train
from crpmnet.output.class_map import read_pgm
from crpmnet.output.model_file import ModelFile
from crpmnet.polsar.scene import CovarianceScene, save_c3
from crpmnet.polsar.synthetic import SyntheticSceneSpec, synth_wishart_scene

SMALL_RUN = "--per-class 10 --max-rate 0.1 --batch1 8 --seed 3"


class TrainClickUnitTests(unittest.TestCase):
    def setUp(self):
        self.runner = CliRunner()
        self.tmp = tempfile.TemporaryDirectory()
        self.data = os.path.join(self.tmp.name, "scene.c3")
        save_c3(synth_wishart_scene(SyntheticSceneSpec(classes=2, height=24, width=24, seed=1)), self.data)
        self.out = os.path.join(self.tmp.name, "run")

    def tearDown(self):
        self.tmp.cleanup()

    def test_train_first_step_with_click(self):
        """crpmnet.command.train: --stop-after cs writes the patch classifier and the dilated map"""
        command = f"--data {self.data} --out {self.out} {SMALL_RUN} --epochs1 1 --stop-after cs"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        self.assertTrue(
            response.output.startswith(
                "alpha=0.25 gamma=2 lr1=0.005 lr2=0.001 batch1=8 batch2=5 epochs1=1 epochs2=30 "
                "w-train=50 w-error=100 w-else=0.5 per-class=10 max-rate=0.1 seed=3"
            )
        )
        self.assertIn("training_pixels=20", response.output)
        for name in ("cs.model", "normalization.json", "dilated-map.pgm", "train.log", "train-summary.json"):
            self.assertTrue(os.path.exists(os.path.join(self.out, name)), name)
        self.assertFalse(os.path.exists(os.path.join(self.out, "crpm.model")))
        model = ModelFile.load(os.path.join(self.out, "cs.model"))
        self.assertEqual(model.network.kind, "cs")
        self.assertEqual(model.train_config["per-class"], 10)
        self.assertIsNotNone(model.normalization)
        with open(os.path.join(self.out, "train.log"), encoding="utf-8") as file_obj:
            self.assertIn("epoch=1 step=1 loss=", file_obj.read())

    def test_train_both_steps_with_click(self):
        """crpmnet.command.train: both steps write the fusion network, the refined map and the summary"""
        command = f"-d {self.data} -o {self.out} {SMALL_RUN} --epochs1 1 --epochs2 1 --batch2 1"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        for name in ("crpm.model", "refined-map.pgm", "crpm-map.pgm"):
            self.assertTrue(os.path.exists(os.path.join(self.out, name)), name)
        with open(os.path.join(self.out, "train-summary.json"), encoding="utf-8") as file_obj:
            summary = json.load(file_obj)
        self.assertEqual(summary["pixels_at_w_train"] + summary["pixels_at_w_error"], 20)
        self.assertEqual(read_pgm(os.path.join(self.out, "crpm-map.pgm")).shape, (24, 24))
        self.assertEqual(ModelFile.load(os.path.join(self.out, "crpm.model")).network.kind, "crpm")

    def test_same_seed_same_models(self):
        """crpmnet.command.train: two runs with one seed write byte-identical model files"""
        contents = []
        for run in ("a", "b"):
            out = os.path.join(self.tmp.name, run)
            command = f"-d {self.data} -o {out} {SMALL_RUN} --epochs1 0 --epochs2 0"
            response = self.runner.invoke(cli=train, args=shlex.split(command))
            self.assertEqual(response.exit_code, 0, response.output)
            contents.append([Path(out, name).read_bytes() for name in ("cs.model", "crpm.model")])
        self.assertEqual(contents[0], contents[1])

    def test_stacked_bands(self):
        """crpmnet.command.train: repeated --data stacks the bands' features along channels"""
        second = os.path.join(self.tmp.name, "band2.c3")
        save_c3(synth_wishart_scene(SyntheticSceneSpec(classes=2, height=24, width=24, seed=2)), second)
        command = f"-d {self.data} -d {second} -o {self.out} {SMALL_RUN} --epochs1 1 --stop-after cs"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        model = ModelFile.load(os.path.join(self.out, "cs.model"))
        self.assertEqual(model.network.spec.input_channels, 12)
        self.assertEqual(model.normalization.channels[:2], ["b1:C11", "b1:C22"])
        self.assertEqual(model.normalization.channels[6], "b2:C11")

        cs_model = os.path.join(self.out, "cs.model")
        class_map_file = os.path.join(self.tmp.name, "map.pgm")
        command = f"-m {cs_model} -d {self.data} -d {second} -o {class_map_file}"
        response = self.runner.invoke(cli=predict, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        self.assertEqual(read_pgm(class_map_file).shape, (24, 24))
        response = self.runner.invoke(cli=predict, args=shlex.split(f"-m {cs_model} -d {self.data} -o {class_map_file}"))
        self.assertEqual(response.exit_code, 4)

    def test_bands_of_different_size(self):
        second = os.path.join(self.tmp.name, "band2.c3")
        save_c3(synth_wishart_scene(SyntheticSceneSpec(classes=2, height=20, width=24, seed=2)), second)
        command = f"-d {self.data} -d {second} -o {self.out} {SMALL_RUN} --epochs1 1 --stop-after cs"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 4)
        self.assertIn("error=IncompatibleDataError exit=4", response.output)

    def test_package_log_level_is_restored(self):
        package_logger = logging.getLogger("crpmnet")
        command = f"-d {self.data} -o {self.out} {SMALL_RUN} --epochs1 0 --stop-after cs"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        self.assertEqual(package_logger.level, logging.CRITICAL)
        self.assertFalse(any(isinstance(h, logging.FileHandler) for h in package_logger.handlers))

    def test_training_log_attach_and_detach(self):
        package_logger = logging.getLogger("crpmnet")
        original = package_logger.level
        try:
            package_logger.setLevel(logging.WARNING)
            handler, previous_level = attach_training_log(Path(self.tmp.name, "train.log"))
            self.assertEqual(package_logger.level, logging.INFO)
            detach_training_log(handler, previous_level)
            self.assertEqual(package_logger.level, logging.WARNING)
            self.assertNotIn(handler, package_logger.handlers)
        finally:
            package_logger.setLevel(original)

    def test_config_file_and_flags(self):
        """crpmnet.command.train: flags override the YAML file, which overrides the defaults"""
        config_file = os.path.join(self.tmp.name, "train.yml")
        with open(config_file, "w", encoding="utf-8") as file_obj:
            file_obj.write("epochs1: 1\nalpha: 0.5\nrefine-weights: illustration\n")
        command = f"-d {self.data} -o {self.out} -c {config_file} {SMALL_RUN} --alpha 0.75 --stop-after cs"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 0, response.output)
        self.assertIn("alpha=0.75 ", response.output)
        self.assertIn("epochs1=1 ", response.output)
        self.assertIn("w-train=10 w-error=50 w-else=1 ", response.output)

    def test_bad_config_value(self):
        command = f"-d {self.data} -o {self.out} --lr1 2"
        response = self.runner.invoke(cli=train, args=shlex.split(command))
        self.assertEqual(response.exit_code, 2)
        self.assertIn("error=ConfigError", response.output)

    def test_unlabeled_scene(self):
        """crpmnet.command.train: a scene without labels cannot be trained on"""
        planes = np.zeros((6, 12, 12), dtype=np.complex128)
        planes[[0, 3, 5]] = 1.0
        save_c3(CovarianceScene(planes), self.data)
        response = self.runner.invoke(cli=train, args=shlex.split(f"-d {self.data} -o {self.out}"))
        self.assertEqual(response.exit_code, 3)
        self.assertIn("error=TrainingPreconditionError exit=3", response.output)
