"""End-to-end run of the driven-oscillator pipeline through the CLI.

Writes a scaled-down copy of configs/sed_harmonic_ground.json (fewer modes,
shorter run, smaller ensemble) into a temporary directory, then drives the
same entry points the installed `sedsim` command exposes:

    sedsim run <config>      integrate, coarse-grain, compare, write artifacts
    sedsim report <dir>      reprint the stored comparison table
    sedsim plot <dir>        emit gnuplot-ready .dat/.gp files

The scaled-down statistics are not expected to meet the shipped tolerances;
the point here is the artifact flow and the exit-code contract (0 pass,
1 tolerance failure, 2 config error).

Runtime about ten seconds.
"""

import json
import os
import tempfile
from pathlib import Path

from sedsim.cli import main as sedsim

BASE = Path(__file__).resolve().parent.parent / "configs" / "sed_harmonic_ground.json"


def scaled_config(workdir: Path) -> Path:
    cfg = json.loads(BASE.read_text())
    cfg["field"]["n_modes"] = 128
    cfg["time"]["t_final"] = 1500.0
    cfg["ensemble"]["n_traj"] = 120
    cfg["coarse_grain"]["t_window"] = [900.0, 1500.0]
    cfg["coarse_grain"]["delta_t_sweep"] = [1.2, 2.4, 4.8]
    cfg["coarse_grain"]["x_bins"]["n"] = 31
    cfg["grid"]["n_points"] = 301
    cfg["outputs"]["directory"] = "runs/demo"
    path = workdir / "demo_config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def main():
    workdir = Path(tempfile.mkdtemp(prefix="sedsim_demo_"))
    config = scaled_config(workdir)
    os.environ["SEDSIM_OUTPUT_ROOT"] = str(workdir)
    run_dir = workdir / "runs" / "demo"

    print(f"$ sedsim run {config.name}")
    code = sedsim(["run", str(config)])
    print(f"-> exit {code} (1 is expected: the scaled-down ensemble misses "
          f"the shipped tolerances)\n")

    print(f"$ sedsim report {run_dir.name}")
    code = sedsim(["report", str(run_dir)])
    print(f"-> exit {code}")

    print(f"\n$ sedsim plot {run_dir.name}")
    code = sedsim(["plot", str(run_dir)])
    print(f"-> exit {code}")

    print("\nartifacts:")
    for p in sorted(run_dir.rglob("*")):
        if p.is_file():
            print(f"  {p.relative_to(workdir)}  ({p.stat().st_size} bytes)")


if __name__ == "__main__":
    main()
