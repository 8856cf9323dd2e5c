import pathlib
import subprocess
import sys

import pytest

FRONTEND_DIR = pathlib.Path(__file__).resolve().parents[1]
sys.path.insert(0, str(FRONTEND_DIR))


def run_sweep(out_path, *cli_args):
    """Produce a sweep CSV through the analysis CLI (the external interface
    this package consumes); skip if that CLI is not installed."""
    cmd = [sys.executable, "-m", "plannersim.cli", "sweep", *cli_args,
           "--out", str(out_path)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        pytest.skip(f"sweep CLI unavailable: {proc.stderr.strip()[:200]}")
    return out_path


@pytest.fixture(scope="session")
def sweep_csvs(tmp_path_factory):
    base = tmp_path_factory.mktemp("sweeps")
    return {
        "fig3left": run_sweep(base / "fig3left.csv", "--spec", "fig3left"),
        "fig3right": run_sweep(base / "fig3right.csv", "--spec", "fig3right"),
        "fig4": run_sweep(base / "fig4.csv", "--spec", "fig4"),
        "fig4_half": run_sweep(
            base / "fig4_half.csv", "--spec", "fig4", "--kappa", "0.5"
        ),
    }
