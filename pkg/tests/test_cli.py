import json
from math import log
from pathlib import Path

import numpy as np
import pytest

from affdim.cli import main

CONFORMAL_CFG = """\
ifs:
  d: 2
  m: 4
  matrices:
    - [0.33333333333333331, 0.0, 0.0, 0.33333333333333331]
    - [0.0, -0.33333333333333331, 0.33333333333333331, 0.0]
    - [-0.33333333333333331, 0.0, 0.0, -0.33333333333333331]
    - [0.0, 0.33333333333333331, -0.33333333333333331, 0.0]
  translations:
    - [0.0, 0.0]
    - [0.5, 0.0]
    - [0.0, 0.5]
    - [0.5, 0.5]
run:
  seed: 7
  tol: 1.0e-7
"""

CANTOR_CFG = """\
ifs:
  d: 1
  m: 2
  matrices:
    - [0.33333333333333331]
    - [0.33333333333333331]
  translations:
    - [0.0]
    - [0.66666666666666663]
measure:
  kind: bernoulli
  probs: [0.5, 0.5]
grid:
  gamma: 0.5
  n_min: 3
  n_max: 9
run:
  seed: 11
  n_points: 20000
  n_translations: 2
  n_paths: 3
  n_max: 40
  rho: 0.5
  centers: 8
"""

TRIPLE_CFG = """\
ifs:
  d: 2
  m: 3
  matrices:
    - [0.3, 0.0, 0.0, 0.2]
    - [0.3, 0.0, 0.0, 0.2]
    - [0.3, 0.0, 0.0, 0.2]
  translations:
    - [0.0, 0.0]
    - [0.35, 0.0]
    - [0.0, 0.3]
grid:
  gamma: 0.5
  n_min: 2
  n_max: 6
run:
  seed: 5
  n_translations: 2
  rho: 0.5
"""


def run_cli(tmp_path, name, text, command, extra=()):
    cfg = tmp_path / f"{name}.yaml"
    cfg.write_text(text)
    out = tmp_path / f"out_{name}_{command}"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


class TestCommands:
    def test_affinity_conformal(self, tmp_path):
        code, out = run_cli(tmp_path, "conf", CONFORMAL_CFG, "affinity")
        assert code == 0
        text = (out / "affinity_summary.csv").read_text().splitlines()
        est = float(text[1].split(",")[0])
        assert est == pytest.approx(log(4) / log(3), abs=1e-5)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "affinity"
        assert manifest["seed"] == 7

    def test_sdim_and_gpot(self, tmp_path):
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "sdim")
        assert code == 0
        lines = (out / "sdim.csv").read_text().splitlines()
        assert lines[0] == "path,n,exponent"
        last = float(lines[-1].split(",")[2])
        assert last == pytest.approx(log(2) / log(3), abs=1e-9)
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "gpot")
        assert code == 0
        assert (out / "gpot_summary.csv").exists()

    def test_capacity(self, tmp_path):
        code, out = run_cli(tmp_path, "triple", TRIPLE_CFG, "capacity")
        assert code == 0
        lines = (out / "capacity.csv").read_text().splitlines()
        assert lines[0] == "r,depth,capacity,slope"
        assert len(lines) == 6  # one row per grid radius

    def test_boxdim_and_localdim(self, tmp_path):
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "boxdim")
        assert code == 0
        assert (out / "boxdim.csv").exists()
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "localdim")
        assert code == 0
        rows = (out / "localdim.csv").read_text().splitlines()
        assert rows[0] == "a_index,center,fit,lower,upper"
        assert len(rows) == 1 + 2 * 8

    def test_covering_passes(self, tmp_path):
        code, out = run_cli(tmp_path, "triple", TRIPLE_CFG, "covering")
        assert code == 0
        rows = (out / "covering.csv").read_text().splitlines()[1:]
        assert rows and all(r.split(",")[-1] == "1" for r in rows)

    def test_sweep(self, tmp_path):
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "sweep")
        assert code == 0
        assert (out / "sweep_verdict.csv").exists()

    def test_example1_golden(self, tmp_path):
        cfg = "ifs: {d: 2}\nmeasure: {kind: example1, k: 1}\nrun: {seed: 3, n_max: 600}\n"
        code, out = run_cli(tmp_path, "ex1", cfg, "example1")
        assert code == 0
        spikes = (out / "example1_spikes.csv").read_text().splitlines()[1:]
        ns = [int(r.split(",")[0]) for r in spikes]
        assert ns == [9, 72, 576]

    def test_orth(self, tmp_path):
        code, out = run_cli(tmp_path, "cantor", CANTOR_CFG, "orth")
        assert code == 0
        summary = (out / "orth_summary.csv").read_text().splitlines()
        assert summary[0].startswith("m,condition_i,condition_ii")

    def test_exbound(self, tmp_path):
        cfg = (
            "ifs:\n  d: 2\n  m: 2\n  matrices:\n    - [0.4, 0.0, 0.0, 0.2]\n"
            "    - [0.4, 0.0, 0.0, 0.2]\n  translations:\n    - [0.0, 0.0]\n"
            "    - [0.5, 0.5]\nrun: {seed: 1, delta: 0.5, dim_m_e: 1.5}\n"
        )
        code, out = run_cli(tmp_path, "exb", cfg, "exbound")
        assert code == 0
        row = (out / "exbound.csv").read_text().splitlines()[1].split(",")
        assert float(row[-1]) == pytest.approx(3.0, abs=1e-12)
        assert float(row[-2]) == pytest.approx(3.5, abs=1e-12)


class TestCliContract:
    def test_reproducible_outputs(self, tmp_path):
        _, out1 = run_cli(tmp_path, "c1", CANTOR_CFG, "boxdim")
        _, out2 = run_cli(tmp_path, "c2", CANTOR_CFG, "boxdim")
        for name in ("boxdim.csv", "boxdim_summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_flag_overrides(self, tmp_path):
        _, out1 = run_cli(tmp_path, "s1", CANTOR_CFG, "boxdim", ["--seed", "99"])
        _, out2 = run_cli(tmp_path, "s2", CANTOR_CFG, "boxdim")
        assert (out1 / "boxdim.csv").read_bytes() != (out2 / "boxdim.csv").read_bytes()
        m = json.loads((out1 / "manifest.json").read_text())
        assert m["seed"] == 99

    def test_missing_field_exit_2(self, tmp_path):
        code, _ = run_cli(tmp_path, "bad", "ifs: {d: 2, m: 2}\n", "affinity")
        assert code == 2

    def test_bad_value_exit_2(self, tmp_path):
        bad = CANTOR_CFG.replace("gamma: 0.5", "gamma: 1.5")
        code, _ = run_cli(tmp_path, "badg", bad, "capacity")
        assert code == 2

    def test_unreadable_config_exit_2(self, tmp_path):
        out = tmp_path / "nope"
        code = main(["affinity", "--config", str(tmp_path / "missing.yaml"),
                     "--out", str(out)])
        assert code == 2

    def test_budget_exit_3(self, tmp_path):
        budget = TRIPLE_CFG + "  node_cap: 10\n"
        code, _ = run_cli(tmp_path, "bud", budget, "covering")
        assert code == 3

    def test_rows_carry_their_radius(self, tmp_path):
        _, out = run_cli(tmp_path, "rows", CANTOR_CFG, "boxdim")
        lines = (out / "boxdim.csv").read_text().splitlines()
        assert lines[0].split(",")[1] == "r"
        radii = {float(l.split(",")[1]) for l in lines[1:]}
        assert radii == {2.0**-n for n in range(3, 10)}
