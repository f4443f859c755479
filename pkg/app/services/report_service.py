# app/services/report_service.py
"""
Files written by the command-line front end: the efficiency table, per-dose
figure data with its gnuplot script, the linear-model check and the run
manifest. Floats are written with 17 significant digits so every CSV reads
back to the same doubles.
"""
from __future__ import annotations

import datetime
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import pandas as pd

from app import __version__
from app.core.errors import OutputExistsError
from app.models.common import Adjustment
from app.models.study import AggregateReport, LinearCheckReport, RunManifest, StudySpec

FLOAT_FORMAT = "%.17g"

TABLE_COLUMNS = [
    "n", "rho", "cf_adjusted",
    "bias_dr_a0", "bias_dr_ad", "bias_der_a0", "bias_der_ad",
    "var_dr_a0", "var_dr_ad",
    "vratio_a0", "vratio_ad", "mseratio_a0", "mseratio_ad",
    "excluded", "note",
]
FIGURE_COLUMNS = ["n", "rho", "adjusted", "dose", "var_ratio", "bias_dr", "bias_der", "var_ratio_se"]

UNPUBLISHED_NOTE = "not-in-paper"
# the published scenario-1 table has no CF row for (120, 0.9)
_UNPRINTED_ROWS = {("scenario1", 120, 0.9, Adjustment.CF)}

_ADJ_RANK = {Adjustment.UNADJ: 0, Adjustment.CF: 1}
# every file a run may write; --force clears these and leaves anything else alone
OUTPUT_NAMES = ("table.csv", "figure.csv", "figure.gp", "linear_check.csv", "resolved_config.env", "manifest.json")


def prepare_output_dir(out_dir: Path | str, force: bool = False) -> Path:
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise OutputExistsError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    for name in OUTPUT_NAMES:
        (out / name).unlink(missing_ok=True)
    return out


def _ordered(reports: Iterable[AggregateReport], spec: Optional[StudySpec]) -> List[AggregateReport]:
    reports = list(reports)
    if spec is None:
        return reports
    n_pos = {n: i for i, n in enumerate(spec.n_values)}
    rho_pos = {r: i for i, r in enumerate(spec.rho_values)}
    return sorted(reports, key=lambda r: (n_pos[r.n], rho_pos[r.rho], _ADJ_RANK[r.adjustment]))


# ---------- table ----------

def table_frame(reports: Sequence[AggregateReport], spec: Optional[StudySpec] = None) -> pd.DataFrame:
    scenario_name = spec.scenario.label if spec is not None else None
    rows = []
    for r in _ordered(reports, spec):
        note = UNPUBLISHED_NOTE if (scenario_name, r.n, r.rho, r.adjustment) in _UNPRINTED_ROWS else ""
        rows.append({
            "n": r.n,
            "rho": r.rho,
            "cf_adjusted": r.adjustment == Adjustment.CF,
            "bias_dr_a0": r.bias_dr[0],
            "bias_dr_ad": r.bias_dr[1],
            "bias_der_a0": r.bias_der[0],
            "bias_der_ad": r.bias_der[1],
            "var_dr_a0": r.variance_dr[0],
            "var_dr_ad": r.variance_dr[1],
            "vratio_a0": r.ratio_variance_vs_dr[0],
            "vratio_ad": r.ratio_variance_vs_dr[1],
            "mseratio_a0": r.ratio_mse_vs_dr[0],
            "mseratio_ad": r.ratio_mse_vs_dr[1],
            "excluded": r.excluded_replications,
            "note": note,
        })
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def write_table_csv(reports: Sequence[AggregateReport], path: Path | str,
                    spec: Optional[StudySpec] = None) -> Path:
    path = Path(path)
    table_frame(reports, spec).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_table_csv(path: Path | str) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    df["note"] = df["note"].fillna("").astype(str)
    df["cf_adjusted"] = df["cf_adjusted"].astype(bool)
    return df


# ---------- figure ----------

def figure_frame(reports: Sequence[AggregateReport], spec: StudySpec) -> pd.DataFrame:
    doses = spec.scenario.dose_levels
    rows = []
    for r in _ordered(reports, spec):
        for j, d in enumerate(doses):
            rows.append({
                "n": r.n,
                "rho": r.rho,
                "adjusted": r.adjustment == Adjustment.CF,
                "dose": d,
                "var_ratio": r.per_dose_variance_ratio[j],
                "bias_dr": r.per_dose_bias_dr[j],
                "bias_der": r.per_dose_bias_der[j],
                "var_ratio_se": r.per_dose_variance_ratio_se[j],
            })
    return pd.DataFrame(rows, columns=FIGURE_COLUMNS)


def write_figure_csv(reports: Sequence[AggregateReport], path: Path | str, spec: StudySpec) -> Path:
    path = Path(path)
    figure_frame(reports, spec).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _curve_title(rho: float, adjusted: bool) -> str:
    return f"rho={rho:g}" if adjusted else f"Unadj. rho={rho:g}"


def write_plot_script(figure: pd.DataFrame, csv_name: str, path: Path | str,
                      panels: Sequence[int] = (40, 80), title: str = "") -> Path:
    """gnuplot script drawing one panel per sample size from the figure CSV."""
    path = Path(path)
    panels = [n for n in panels if n in set(figure["n"])] or sorted(set(figure["n"]))[:2]
    doses = sorted(set(figure["dose"]))
    out_name = Path(csv_name).with_suffix(".png").name

    lines = [
        "# gnuplot script; run: gnuplot " + path.name,
        "set datafile separator ','",
        "set terminal pngcairo size 1200,500",
        f"set output '{out_name}'",
        f"set multiplot layout 1,{len(panels)} title '{title}'",
        f"set xrange [{doses[0] - 0.2:g}:{doses[-1] + 0.2:g}]",
        "set yrange [0:1.2]",
        "set xlabel 'Dose'",
        "set ylabel 'Var. ratio (DER to DR)'",
        "set key bottom right",
    ]
    curves = figure[["rho", "adjusted"]].drop_duplicates().itertuples(index=False)
    curves = sorted(curves, key=lambda c: (c.adjusted, c.rho))
    for n in panels:
        lines.append(f"set title 'n={n}'")
        plots = []
        for c in curves:
            flag = "True" if c.adjusted else "False"
            plots.append(
                f"'{csv_name}' every ::1 using "
                f"(($1=={n} && abs($2-{float(c.rho)!r})<1e-9 && strcol(3) eq '{flag}') ? $4 : 1/0):5 "
                f"with linespoints title '{_curve_title(c.rho, c.adjusted)}'"
            )
        lines.append("plot " + ", \\\n     ".join(plots))
    lines.append("unset multiplot")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ---------- linear check ----------

def write_linear_report(reports: Sequence[LinearCheckReport], path: Path | str) -> Path:
    path = Path(path)
    df = pd.DataFrame([r.model_dump() for r in reports], columns=list(LinearCheckReport.model_fields))
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


# ---------- manifest ----------

def write_manifest(out_dir: Path | str, command: str, spec: StudySpec, outputs: Sequence[str],
                   options: Optional[dict] = None) -> Path:
    out_dir = Path(out_dir)
    manifest = RunManifest(
        command=command,
        output_dir=str(out_dir),
        spec=spec,
        dgp_label=spec.scenario.label,
        artifact_version=__version__,
        created_at=datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        outputs=list(outputs),
        options=options or {},
    )
    path = out_dir / "manifest.json"
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path


def read_manifest(path: Path | str) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
