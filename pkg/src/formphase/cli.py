"""``formphase`` command line: simulate, smooth, fit, evaluate, export.

Every subcommand is a deterministic function of its inputs, flags and
seed. Numbers are written with 17 significant digits. Library errors map
to distinct exit codes (see ``errors``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import TimeSeriesDataset, fmt
from .errors import ConfigError, FormPhaseError

log = logging.getLogger("formphase")


def _floats(text, n=None, name="value"):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers")
    if n is not None and len(vals) != n:
        raise ConfigError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _ints(text, n, name):
    vals = _floats(text, n, name)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{name}: expected integers")
    return [int(v) for v in vals]


def _existing(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"no such file: {p}")
    return p


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v
                        for v in r])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _estimator_args(p):
    p.add_argument("--fourier-order", type=int, default=6)
    p.add_argument("--poly-order", type=int, default=6)
    p.add_argument("--cycle-order", type=int, default=10)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--no-zscore", action="store_true")


def _estimator_config(a):
    from .baselines import EstimatorConfig
    if a.fourier_order < 0 or a.poly_order < 1 or a.cycle_order < 0:
        raise ConfigError("orders must satisfy K >= 0, J >= 1")
    if a.ridge < 0:
        raise ConfigError("ridge must be nonnegative")
    return EstimatorConfig(a.fourier_order, a.poly_order, a.cycle_order,
                           a.ridge, not a.no_zscore)


# -- subcommands ------------------------------------------------------------------

def cmd_simulate(a):
    from .simgen import SimConfig, preset_config, simulate
    fields = {"dim": a.dim, "init_noise": a.init_noise,
              "system_noise": a.system_noise, "phase_noise": a.phase_noise,
              "n_trajectories": a.n_trajectories, "duration": a.duration,
              "dt": a.dt, "sample_every": a.sample_every,
              "n_hmaps": a.n_hmaps, "noise_hmaps": a.noise_hmaps,
              "store_velocities": a.velocities}
    given = {k: v for k, v in fields.items() if v is not None}
    if a.preset:
        cfg = preset_config(a.preset, **given)
    else:
        cfg = SimConfig(**given)
    out = Path(a.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, train, test = simulate(cfg, a.seed)
    for name, ds in (("train", train), ("test", test)):
        ds.meta["preset"] = a.preset
        ds.to_csv(out / f"{name}.csv")
    print(f"wrote {out / 'train.csv'} and {out / 'test.csv'}")


def cmd_smooth(a):
    from .preprocess import SmootherConfig, kalman_smooth
    ds = TimeSeriesDataset.from_csv(_existing(a.input))
    cfg = SmootherConfig(q_pos=a.q_pos, q_vel=a.q_vel, r_obs=a.r_obs)
    out = kalman_smooth(ds, cfg)
    out.to_csv(a.output)
    print(f"wrote {a.output}")


def _with_velocities(ds, cfg=None):
    if ds.has_velocities:
        return ds
    from .preprocess import SmootherConfig, kalman_smooth
    return kalman_smooth(ds, cfg or SmootherConfig())


def cmd_fit(a):
    from .form import fit_form_phase
    cfg = _estimator_config(a)
    ds = _with_velocities(TimeSeriesDataset.from_csv(_existing(a.input)))
    model = fit_form_phase(ds, cfg.fourier_order, cfg.poly_order,
                           cfg.cycle_order, cfg.ridge, cfg.zscore)
    model.save(a.output)
    print(f"wrote {a.output}")


def _model(path):
    from .form import FormPhaseModel
    return FormPhaseModel.load(_existing(path))


def cmd_phase(a):
    model = _model(a.model)
    ds = TimeSeriesDataset.from_csv(_existing(a.input))
    ph = model.phase(ds.x, strict=False)
    rows = zip(ds.segment_ids.tolist(), ds.t, ph)
    _write_rows(a.output, ["segment_id", "t", "phase"], rows)
    print(f"wrote {a.output}")


def cmd_prc(a):
    if a.n_samples < 1:
        raise ConfigError("n_samples must be positive")
    model = _model(a.model)
    ph, cov, pts = model.prc(a.n_samples)
    n = model.dim
    header = ["phase"] + [f"prc_{k}" for k in range(n)] \
        + [f"x_{k}" for k in range(n)]
    _write_rows(a.output, header,
                ([p, *c, *x] for p, c, x in zip(ph, cov, pts)))
    print(f"wrote {a.output}")


def cmd_isochrons(a):
    from .contour import isochrons
    model = _model(a.model)
    levels = _floats(a.levels, name="--levels") if a.levels else []
    w = _floats(a.window, 4, "--window")
    grid = _ints(a.grid, 2, "--grid")
    fixed = None if a.fixed is None else np.array(_floats(a.fixed, model.dim,
                                                          "--fixed"))
    axes = tuple(_ints(a.axes, 2, "--axes"))
    lines = isochrons(model, levels, ((w[0], w[1]), (w[2], w[3])), grid,
                      fixed, axes)
    n = model.dim
    rows = []
    for lv, ls in zip(levels, lines):
        for lid, pl in enumerate(ls):
            rows += [[lv, lid, *p] for p in pl]
    _write_rows(a.output, ["level", "line_id"] + [f"x_{k}" for k in range(n)],
                rows)
    print(f"wrote {a.output}")


def cmd_eval(a):
    from .baselines import compare_estimators
    train = TimeSeriesDataset.from_csv(_existing(a.train))
    test = TimeSeriesDataset.from_csv(_existing(a.test))
    cfg = _estimator_config(a)
    sim = test.meta.get("config", {})
    cond = {"D": test.dim, "init": sim.get("init_noise", ""),
            "system": sim.get("system_noise", ""),
            "phase": sim.get("phase_noise", "")}
    rep = compare_estimators(train, test, cfg, cond)
    rep.to_csv(a.output)
    if a.text:
        Path(a.text).write_text(rep.to_text(), encoding="utf-8")
    sys.stdout.write(rep.to_text())


def cmd_chem(a):
    from .form import fit_form_phase
    from .preprocess import (FilterBankConfig, filter_bank_embed,
                             kalman_smooth, relative_phase)
    from .dataset import Segment
    with open(_existing(a.input), encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[0] != "t" or len(header) < 3:
        raise ConfigError("chem input needs columns t,s_0,s_1,...")
    data = np.array([[float(v) for v in r] for r in body])
    t, S = data[:, 0], data[:, 1:]
    dt = float(np.median(np.diff(t)))
    cfg = FilterBankConfig(isi=a.isi, detrend=not a.no_detrend)
    fb = filter_bank_embed(list(S.T), dt, cfg)
    burn = int(np.ceil(a.burn_in * max(fb.isi) / dt))
    if burn >= len(t) - 3:
        raise ConfigError("recording too short for the burn-in")
    tt = t[burn:]
    phases = []
    for E in fb.embedded:
        seg = kalman_smooth(TimeSeriesDataset([Segment(tt, E[burn:])]))
        model = fit_form_phase(seg, a.fourier_order, a.poly_order,
                               a.cycle_order, a.ridge)
        phases.append(model.unwrapped_phase(seg.x, strict=False))
    rel = relative_phase(phases)
    out = Path(a.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = len(fb.embedded)
    _write_rows(out / "embedded.csv",
                ["t"] + [f"e{i}_{j}" for i in range(k) for j in (0, 1)],
                ([tv, *np.concatenate([E[burn + i] for E in fb.embedded])]
                 for i, tv in enumerate(tt)))
    _write_rows(out / "relative_phase.csv",
                ["t"] + [f"rel_{i}" for i in range(k)],
                ([tv, *rel[:, i]] for i, tv in enumerate(tt)))
    _write_json(out / "chem.meta.json",
                {**fb.meta, "burn_in_samples": burn, "dt": dt})
    print(f"wrote {out / 'embedded.csv'} and {out / 'relative_phase.csv'}")


# -- parser -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="formphase",
                                description="Temporal 1-form phase estimation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate train/test sample paths")
    s.add_argument("--preset", help="table1-row1 .. table1-row12")
    s.add_argument("--dim", type=int)
    s.add_argument("--init-noise", type=float)
    s.add_argument("--system-noise", type=float)
    s.add_argument("--phase-noise", type=float)
    s.add_argument("--n-trajectories", type=int)
    s.add_argument("--duration", type=float)
    s.add_argument("--dt", type=float)
    s.add_argument("--sample-every", type=int)
    s.add_argument("--n-hmaps", type=int)
    s.add_argument("--noise-hmaps", type=int)
    s.add_argument("--velocities", action="store_true", default=None,
                   help="store exact deterministic velocities")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("smooth", help="Kalman-smooth a dataset (adds dx)")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--q-pos", type=float)
    s.add_argument("--q-vel", type=float)
    s.add_argument("--r-obs", type=float)
    s.set_defaults(func=cmd_smooth)

    s = sub.add_parser("fit", help="fit a form-phase model")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    _estimator_args(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("phase", help="phase of every sample")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_phase)

    s = sub.add_parser("prc", help="phase response curve along the cycle")
    s.add_argument("--model", required=True)
    s.add_argument("--n-samples", type=int, default=200)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_prc)

    s = sub.add_parser("isochrons", help="isochron polylines on a 2-D slice")
    s.add_argument("--model", required=True)
    s.add_argument("--levels", default="",
                   help="comma-separated phases (radians)")
    s.add_argument("--window", required=True, help="u0,u1,v0,v1")
    s.add_argument("--grid", default="101,101", help="n_u,n_v")
    s.add_argument("--axes", default="0,1")
    s.add_argument("--fixed", help="values of all coordinates off the slice")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_isochrons)

    s = sub.add_parser("eval", help="event vs form residual variance")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--text")
    _estimator_args(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("chem", help="filter-bank embedding + relative phase")
    s.add_argument("--input", required=True, help="CSV t,s_0,s_1,...")
    s.add_argument("--output-dir", required=True)
    s.add_argument("--isi", type=float)
    s.add_argument("--no-detrend", action="store_true")
    s.add_argument("--burn-in", type=float, default=4.0,
                   help="discarded filter transient, in ISIs")
    _estimator_args(s)
    s.set_defaults(func=cmd_chem)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        a.func(a)
    except FormPhaseError as e:
        print(f"error ({type(e).__name__}): {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
