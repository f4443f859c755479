#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
main.py
Command-line front end of the dose-exposure-response simulator.

  python -m sim_engine.main table --scenario 1 [--reps 1000 --seed 7]
  python -m sim_engine.main figure --scenario 1 --link probit --form modelbased
  python -m sim_engine.main linear-check [--n 200]
  python -m sim_engine.main custom study.env

Defaults come from .env (SIM_* keys, see app/config.py), then the custom config
file, then the flags. Every run writes its outputs, `manifest.json` and the
resolved config into --out.

Logging: stdout plus <LOG_DIR>/sim_engine/log_YYYY-MM-DD.txt
Exit codes: 0 ok, 2 config error, 3 gold-standard failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.config import settings
from app.core.errors import ConfigError, GoldStandardError
from app.core.log import log_write, open_log
from app.models.study import StudySpec
from app.services import harness_service, report_service
from app.services.study_config_service import (
    build_study_spec,
    dump_study_config,
    load_study_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GOLD = 3
EXIT_IO = 4

# flag dest -> config key (lowercase)
FLAG_KEYS = ("scenario", "doses", "n", "rho", "reps", "seed", "adjust", "link", "form",
             "truth", "dgp", "exclusion", "workers")


def _float_list(raw: str) -> List[float]:
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=int, default=None, help="Scenario preset (1 or 2)")
    common.add_argument("--doses", type=_float_list, default=None, help="Custom dose grid, e.g. 1,2,3,4,5")
    common.add_argument("--n", type=int, action="append", default=None, help="Sample size (repeatable)")
    common.add_argument("--rho", type=float, action="append", default=None, help="Confounding level (repeatable)")
    common.add_argument("--reps", type=int, default=None, help="Monte Carlo replications")
    common.add_argument("--seed", type=int, default=None, help="Master seed")
    common.add_argument("--adjust", choices=["cf", "unadj", "both"], default=None)
    common.add_argument("--link", choices=["probit", "logit"], default=None, help="ER link for predictions")
    common.add_argument("--form", choices=["modelbased", "empirical"], default=None,
                        help="DER prediction form")
    common.add_argument("--truth", choices=["analytic", "fitted"], default=None)
    common.add_argument("--dgp", choices=["code", "prose"], default=None, help="Data-generating parameterization")
    common.add_argument("--exclusion", choices=["pairwise", "per_column"], default=None)
    common.add_argument("--workers", type=int, default=None, help="Worker processes (0 = cpu count)")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")

    parser = argparse.ArgumentParser(description="Dose-response vs dose-exposure-response efficiency simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("table", parents=[common], help="Bias / variance / MSE table (CSV)")
    sub.add_parser("figure", parents=[common], help="Per-dose variance ratios (CSV + gnuplot script)")
    sub.add_parser("linear-check", parents=[common], help="Linear-model Monte Carlo vs closed forms")
    custom = sub.add_parser("custom", parents=[common], help="Run a study described by a KEY=VALUE file")
    custom.add_argument("config_file", type=str)
    return parser


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: getattr(args, k) for k in FLAG_KEYS if getattr(args, k) is not None}


def _default_out(command: str, spec: StudySpec) -> Path:
    name = f"{command}-{spec.scenario.label}"
    if command == "figure":
        name += f"-{spec.prediction_link.value}-{spec.prediction_form.value}"
    return settings.SIM_OUTPUT_DIR / name


def _write_outputs(command: str, spec: StudySpec, scenario_id: int, out_dir: Path, log_fh) -> List[str]:
    outputs: List[str] = []
    if command == "linear-check":
        reports = harness_service.run_linear_check(spec, log_fh)
        outputs.append(report_service.write_linear_report(reports, out_dir / "linear_check.csv").name)
    else:
        reports = harness_service.run_study(spec, log_fh)
        if command == "table":
            outputs.append(report_service.write_table_csv(reports, out_dir / "table.csv", spec).name)
        else:
            fig_path = report_service.write_figure_csv(reports, out_dir / "figure.csv", spec)
            figure = report_service.figure_frame(reports, spec)
            title = f"{spec.scenario.label}: {spec.prediction_link.value} {spec.prediction_form.value}"
            script = report_service.write_plot_script(figure, fig_path.name, out_dir / "figure.gp",
                                                      panels=spec.n_values[:2], title=title)
            outputs += [fig_path.name, script.name]

    config_path = out_dir / "resolved_config.env"
    config_path.write_text(dump_study_config(command, spec, scenario_id), encoding="utf-8")
    outputs.append(config_path.name)
    for name in outputs:
        log_write(log_fh, f"[REPORT] wrote {out_dir / name}")
    return outputs


def run(args: argparse.Namespace, log_fh) -> int:
    overrides = _flag_overrides(args)
    if args.command == "custom":
        log_write(log_fh, f"[CLI] loading {args.config_file}")
        command, _, file_overrides = load_study_config(args.config_file)
        merged = {**file_overrides, **overrides}
        spec = build_study_spec(command, merged)
        manifest_command = "custom"
    else:
        command = args.command
        merged = overrides
        spec = build_study_spec(command, merged)
        manifest_command = f"table{merged.get('scenario', 1)}" if command == "table" else command
    scenario_id = int(merged.get("scenario", 1))

    out_dir = Path(args.out) if args.out else _default_out(command, spec)
    out_dir = report_service.prepare_output_dir(out_dir, force=args.force)
    log_write(log_fh, f"[CLI] {command} scenario={spec.scenario.label} n={spec.n_values} rho={spec.rho_values} "
                      f"reps={spec.n_replications} seed={spec.master_seed} workers={spec.workers} out={out_dir}")

    t0 = time.perf_counter()
    outputs = _write_outputs(command, spec, scenario_id, out_dir, log_fh)
    options = {"study_command": command, "scenario_id": scenario_id}
    if args.command == "custom":
        options["config_file"] = str(args.config_file)
    report_service.write_manifest(out_dir, manifest_command, spec, outputs + ["manifest.json"], options)
    log_write(log_fh, f"[CLI] finished in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    with open_log(settings.LOG_DIR, "sim_engine") as log_fh:
        try:
            return run(args, log_fh)
        except ConfigError as e:
            log_write(log_fh, f"[CLI][ERROR] {e}")
            return EXIT_CONFIG
        except GoldStandardError as e:
            log_write(log_fh, f"[CLI][ERROR] {e}")
            return EXIT_GOLD
        except OSError as e:
            log_write(log_fh, f"[CLI][ERROR] {e}")
            return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
