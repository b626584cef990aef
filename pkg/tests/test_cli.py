# tests/test_cli.py
"""
Tests for the toric-credit command line
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest

from src import cli as cli_module
from src.cli import run
from src.core.graph_model import marginals_from_params
from src.schemas import LossDistConfig
from src.services.reproduce_service import ReproduceService

SECTOR = {"sector_sizes": [125], "eta_S": [15.0], "eta_F": [-2.0], "eta_FS": [-2.1]}
CHAIN = {"n_firms": 6, "eta_S": 1.3, "eta_FS": -0.8, "eta_F": -1.5}
COPULA = {"asset_correlation": 0.2, "default_intensity": 0.05, "n_firms": 20}


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document) if not isinstance(document, str) else document)
        return str(path)

    return write


def cli(command, config, out, *extra):
    argv = [command, "--log-level", "WARNING", "--out", str(out)]
    if config is not None:
        argv += ["--config", config]
    return run(argv + list(extra))


class TestUsage:
    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 64

    def test_unknown_flag(self, write_config, tmp_path):
        assert cli("loss-dist", write_config({"sector": SECTOR}), tmp_path / "x.csv", "--bogus") == 64

    def test_missing_config(self, tmp_path):
        assert cli("loss-dist", None, tmp_path / "x.csv") == 2

    def test_malformed_json(self, write_config, tmp_path):
        assert cli("loss-dist", write_config("{not json"), tmp_path / "x.csv") == 2

    def test_missing_field(self, write_config, tmp_path):
        config = write_config({"sector": {k: v for k, v in SECTOR.items() if k != "eta_F"}})
        assert cli("loss-dist", config, tmp_path / "x.csv") == 2
        assert not (tmp_path / "x.csv").exists()

    def test_schema(self, tmp_path):
        out = tmp_path / "schema.json"
        assert run(["schema", "loss-dist", "--out", str(out), "--log-level", "WARNING"]) == 0
        assert json.loads(out.read_text()) == LossDistConfig.model_json_schema()

    @pytest.mark.parametrize(
        "error", [FloatingPointError("overflow"), np.linalg.LinAlgError("singular matrix")]
    )
    def test_numeric_failure(self, write_config, tmp_path, monkeypatch, error):
        def fail(args):
            raise error

        monkeypatch.setitem(cli_module.COMMANDS, "loss-dist", fail)
        assert cli("loss-dist", write_config({"sector": SECTOR}), tmp_path / "x.csv") == 3

class TestSectorCommands:
    def test_loss_dist(self, write_config, tmp_path):
        out = tmp_path / "loss.csv"
        assert cli("loss-dist", write_config({"sector": SECTOR}), out) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["n", "prob"]
        assert len(frame) == 126
        assert frame["prob"].sum() == pytest.approx(1.0, abs=1e-10)

    def test_corr_surface(self, write_config, tmp_path):
        out = tmp_path / "surface.csv"
        config = write_config(
            {
                "q": 0.05,
                "n_firms": 50,
                "eta_S": {"start": 0.0, "stop": 10.0, "num": 3},
                "eta_FS": [-1.0, -2.0],
            }
        )
        assert cli("corr-surface", config, out) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 6
        assert list(frame.columns) == ["eta_S", "eta_FS", "eta_F_star", "rho"]


class TestCalibrate:
    def test_triangle(self, write_config, tmp_path, triangle, triangle_params):
        target = marginals_from_params(triangle, triangle_params)
        config = write_config(
            {
                "graph": {"nodes": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
                "target": {"single": list(target.single), "pair": list(target.pair)},
                "tolerance": 1e-10,
            }
        )
        out = tmp_path / "fit.json"
        assert cli("calibrate", config, out) == 0
        document = json.loads(out.read_text())
        assert document["eta_node"] == pytest.approx(list(triangle_params.eta_node), abs=1e-6)
        assert document["eta_edge"] == pytest.approx(list(triangle_params.eta_edge), abs=1e-6)
        residuals = pd.read_csv(tmp_path / "fit.residuals.csv")
        assert len(residuals) == 6
        assert residuals["error"].abs().max() < 1e-8
        joint = pd.read_csv(tmp_path / "fit.distribution.csv", dtype={"w": str})
        assert list(joint["w"]) == ["000", "001", "010", "011", "100", "101", "110", "111"]
        assert joint["p"].sum() == pytest.approx(1.0, abs=1e-12)

    def test_outside_target(self, write_config, tmp_path):
        config = write_config(
            {
                "graph": {"nodes": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
                "target": {"single": [0.2, 0.5, 0.5], "pair": [0.3, 0.1, 0.25]},
            }
        )
        assert cli("calibrate", config, tmp_path / "fit.json") == 3


class TestChainCommands:
    def test_multi_loss_with_horizon_probability(self, write_config, tmp_path):
        chain = {k: v for k, v in CHAIN.items() if k != "eta_F"}
        config = write_config(
            {
                "chain": {**chain, "horizon_default_prob": 0.1, "horizon_steps": 2},
                "steps": [0, 1, 2, 5],
                "removal_probs": [0.5],
            }
        )
        out = tmp_path / "multi.csv"
        assert cli("multi-loss", config, out) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 28
        totals = frame.groupby("k")["prob"].sum()
        assert totals.to_numpy() == pytest.approx([1.0] * 4, abs=1e-10)

    def test_two_marginal_sources(self, write_config, tmp_path):
        config = write_config(
            {
                "chain": {**CHAIN, "horizon_default_prob": 0.1},
                "steps": [1],
                "removal_probs": [0.5],
            }
        )
        assert cli("multi-loss", config, tmp_path / "multi.csv") == 2

    def test_simulate_is_reproducible(self, write_config, tmp_path):
        config = write_config(
            {"chain": CHAIN, "steps": [1, 3], "removal_probs": [0.2, 0.8], "n_paths": 2000}
        )
        outputs = []
        for name, threads in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")):
            out = tmp_path / name
            assert cli("simulate", config, out, "--seed", "7", "--threads", threads) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]


class TestPricing:
    def test_price_chain(self, write_config, tmp_path):
        out = tmp_path / "spreads.json"
        assert cli("price", write_config({"chain": CHAIN, "removal_prob": 0.35}), out) == 0
        document = json.loads(out.read_text())
        assert list(document) == sorted(["equity", "mezzanine", "senior", "senior-2", "super-senior"])
        assert all(entry["spread"] >= 0 for entry in document.values())

    def test_price_term_structure_without_losses(self, write_config, tmp_path):
        csv = tmp_path / "term.csv"
        pd.DataFrame({"k": range(11), "loss": 0.0, "prob": 1.0}).to_csv(csv, index=False)
        out = tmp_path / "spreads.json"
        assert cli("price", write_config({"term_structure_csv": str(csv)}), out) == 0
        document = json.loads(out.read_text())
        assert all(entry["spread"] == 0.0 for entry in document.values())

    def test_copula_price(self, write_config, tmp_path):
        out = tmp_path / "copula.csv"
        config = write_config({"copula": COPULA, "contract": {"maturity": 2.0}, "n_paths": 500})
        assert cli("copula-price", config, out, "--seed", "3") == 0
        frame = pd.read_csv(out)
        assert len(frame) == 5
        assert list(frame.columns) == ["tranche", "spread_bps", "stderr_bps"]

    def test_implied_corr_unknown_label(self, write_config, tmp_path):
        config = write_config({"copula": COPULA, "observed": {"junior": 0.1}, "n_paths": 200})
        assert cli("implied-corr", config, tmp_path / "implied.csv") == 2

    def test_fit_smile_pinned(self, write_config, tmp_path):
        rating = {
            "name": "high-yield",
            "one_year_default_prob": 0.05,
            "asset_correlation": 0.3,
            "n_paths": 500,
            "max_evaluations": 0,
        }
        out = tmp_path / "smile.csv"
        assert cli("fit-smile", write_config({"ratings": [rating], "implied": False}), out) == 0
        assert len(pd.read_csv(out)) == 5
        summaries = json.loads((tmp_path / "smile.params.json").read_text())
        assert summaries[0]["name"] == "high-yield"
        assert summaries[0]["eta_S"] == 4.0


def test_reproduce_horizon(tmp_path):
    assert run(["reproduce", "horizon", "--out", str(tmp_path), "--log-level", "WARNING"]) == 0
    frame = pd.read_csv(tmp_path / "horizon_correlation.csv")
    assert list(frame["rating"]) == ["high", "low"]


def test_reproduce_passes_threads(tmp_path, monkeypatch):
    seen = []

    def record(self, figure, config=None):
        seen.append((figure, config.threads))
        return {}

    monkeypatch.setattr(ReproduceService, "run", record)
    argv = ["reproduce", "fig3-6", "--threads", "3", "--out", str(tmp_path), "--log-level", "WARNING"]
    assert run(argv) == 0
    assert seen == [("fig3-6", 3)]
