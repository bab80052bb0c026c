"""Command-line front end: ``sibf simulate | extract | sweep | maxsnr``.

Every option can also come from a flat ``key = value`` config file passed
with ``--config``; explicit flags win over the file and unknown keys are
rejected. Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 flagged
bins or failed verification under ``--strict``.

CSV columns
-----------
metrics.csv (extract, maxsnr):
    run_id, cast, model, si_sdr, sdr, snr, correlation, best_input_si_sdr,
    flagged_bins
sweep.csv:
    run_id, model, beta, alpha, nu, iters, casts, start, generator, then the
    metric columns above.
"""
import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .cast import CastConfig, GeneratorError, make_generator, run_iterative_casting
from .eval import sdr_decomposition, si_sdr
from .extract import run_sibf
from .maxsnr import (
    MaskPair,
    ideal_binary_masks,
    max_snr_bf,
    read_mask_csv,
    run_sibf_direct,
)
from .models import ModelConfig
from .sim import SCENARIO_MULTIPLIERS, SceneSpec, atomic_write, export_scene, generate_scene, load_scene
from .tfr import istft, stft, write_wav, zero_band_edges

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
OUTPUT_ENV = "SIBF_OUTPUT_DIR"

MODEL_NAMES = {"gauss": "tv_gaussian", "laplace": "bs_laplacian", "student-t": "tv_t"}
START_NAMES = {"boost": "boost", "model-specific": "model_specific"}
GENERATORS = ("oracle", "identity", "blend", "file", "wiener")
METRIC_COLUMNS = ["si_sdr", "sdr", "snr", "correlation", "best_input_si_sdr", "flagged_bins"]

MODEL_DEFAULTS = {
    "model": "laplace", "beta": 8.0, "alpha": 100.0, "nu": 1.0, "eps": 1e-7,
    "beta_best": 8.0, "iters": 10, "casts": 1, "start": "boost",
    "generator": "wiener", "blend_lambda": 0.5, "ref_file": None, "mic": None,
    "band_zero": None, "strict": False,
}
DEFAULTS = {
    "simulate": {"mics": 3, "sources": 2, "seed": 0, "multiplier": 1.0, "duration": 4.0,
                 "sample_rate": 16000, "mixing": "instantaneous_complex_per_bin",
                 "snr": 2.0, "suite": False},
    "extract": dict(MODEL_DEFAULTS, save_casts=False, dump_magnitude=False),
    "sweep": dict(MODEL_DEFAULTS),
    "maxsnr": dict(MODEL_DEFAULTS, target_mask=None, interference_mask=None,
                   ideal_masks=False, verify_unified=False),
}


class CliError(Exception):
    def __init__(self, message, code=EXIT_ARGS):
        super().__init__(message)
        self.code = code


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value, default):
    if not isinstance(value, str) or default is None:
        return value
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags."""
    defaults = DEFAULTS[args.command]
    conf = read_config(args.config) if args.config else {}
    unknown = sorted(set(conf) - set(defaults))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    params = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            params[key] = flag
        elif key in conf:
            params[key] = _coerce(conf[key], default)
        else:
            params[key] = default
    return params


def _output_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ENV, "sibf_out"))


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.6f}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(h, "")) for h in header])
    text = buf.getvalue()
    atomic_write(path, lambda p: Path(p).write_text(text, encoding="utf-8", newline=""))


def _run_id(command, params) -> str:
    blob = json.dumps([command, params], sort_keys=True, default=str)
    return hashlib.sha1(blob.encode()).hexdigest()[:12]


def _model_config(p) -> ModelConfig:
    if p["model"] not in MODEL_NAMES:
        raise CliError(f"--model must be one of {sorted(MODEL_NAMES)}")
    try:
        return ModelConfig(kind=MODEL_NAMES[p["model"]], beta=float(p["beta"]),
                           alpha=float(p["alpha"]), nu=float(p["nu"]),
                           eps=float(p["eps"]), beta_best=float(p["beta_best"]))
    except ValueError as exc:
        raise CliError(str(exc))


def _band(p, cfg):
    if not p["band_zero"]:
        return None
    try:
        low, high = (float(v) for v in str(p["band_zero"]).split(","))
    except ValueError:
        raise CliError("--band-zero expects 'low,high' in Hz")
    if not 0 <= low < high <= cfg.sample_rate / 2:
        raise CliError("--band-zero needs 0 <= low < high <= Nyquist")
    return low, high


class _Context:
    """A loaded scene plus everything the commands derive from it."""

    def __init__(self, scene_dir, p):
        try:
            self.scene, extras = load_scene(scene_dir)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load scene {scene_dir}: {exc}", EXIT_IO)
        self.cfg = self.scene.cfg
        self.n = self.scene.n_samples
        n_ch = self.scene.n_channels
        mic = p["mic"]
        self.m = min(5, n_ch) - 1 if mic is None else int(mic) - 1
        if not 0 <= self.m < n_ch:
            raise CliError(f"--mic must lie in 1..{n_ch}")
        self.band = _band(p, self.cfg)
        self.target = self.images = None
        if "target_image" in extras:
            self.images = extras["target_image"]
            self.target = self.images[self.m]
        self.noise = extras.get("noise_image")
        self.observation = istft(self.scene.spec, self.cfg, length=self.n)

    def clean_magnitude(self):
        if self.target is None:
            return None
        return np.abs(stft(self.target, self.cfg))

    def to_time(self, spec):
        if self.band is not None:
            spec = zero_band_edges(spec, *self.band, self.cfg)
        return istft(spec, self.cfg, length=self.n)

    def eval_reference(self):
        if self.band is None:
            return self.target
        return self.to_time(stft(self.target, self.cfg))

    def metrics(self, out_time, flagged_count):
        row = {"flagged_bins": int(flagged_count)}
        if self.target is None or not np.any(self.target):
            row.update({k: math.nan for k in METRIC_COLUMNS[:-1]})
            return row
        ref = self.eval_reference()
        rep = sdr_decomposition(out_time, ref, self.cfg)
        row.update(rep.as_row())
        row["best_input_si_sdr"] = best_channel_si_sdr(self.observation, self.images)
        return row

    def generator(self, p):
        if p["generator"] not in GENERATORS:
            raise CliError(f"--generator must be one of {GENERATORS}")
        clean = self.clean_magnitude()
        if p["generator"] in ("oracle", "blend") and clean is None:
            raise CliError(f"--generator {p['generator']} needs target_image.wav in the scene")
        try:
            return make_generator(p["generator"], clean, float(p["blend_lambda"]),
                                  p["ref_file"], self.cfg)
        except OSError as exc:
            raise CliError(str(exc), EXIT_IO)
        except ValueError as exc:
            raise CliError(str(exc))


def _cast_run(ctx, p, model, iters, casts):
    if p["start"] not in START_NAMES:
        raise CliError(f"--start must be one of {sorted(START_NAMES)}")
    cfg = CastConfig(ctx.generator(p), model, l_cast=int(casts), l_filter=int(iters),
                     mic_index=ctx.m, start=START_NAMES[p["start"]])
    try:
        return run_iterative_casting(ctx.scene, cfg)
    except GeneratorError as exc:
        code = EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_ARGS
        raise CliError(str(exc), code)


def best_channel_si_sdr(observation, images) -> float:
    """Highest SI-SDR over channels, each scored against its own target image."""
    return max(si_sdr(x, s) for x, s in zip(observation, images) if np.any(s))


# ---------------------------------------------------------------- commands


def cmd_simulate(args, p):
    out = _output_dir(args)
    mults = SCENARIO_MULTIPLIERS if p["suite"] else (float(p["multiplier"]),)
    written = []
    for mult in mults:
        try:
            spec = SceneSpec(n_mics=int(p["mics"]), n_sources=int(p["sources"]),
                             duration=float(p["duration"]), sample_rate=int(p["sample_rate"]),
                             mixing=p["mixing"], noise_multiplier=mult, seed=int(p["seed"]),
                             base_snr_db=float(p["snr"]))
        except ValueError as exc:
            raise CliError(str(exc))
        scene, gt = generate_scene(spec)
        d = out / f"scenario_x{mult:g}" if p["suite"] else out
        try:
            export_scene(d, scene, gt)
        except OSError as exc:
            raise CliError(f"cannot write {d}: {exc}", EXIT_IO)
        written.append(d)
    for d in written:
        print(d)
    return EXIT_OK


def cmd_extract(args, p):
    ctx = _Context(args.scene, p)
    model = _model_config(p)
    trace = _cast_run(ctx, p, model, p["iters"], p["casts"])
    out = _output_dir(args)
    run_id = _run_id("extract", p)
    rows = []
    fs = int(ctx.cfg.sample_rate)
    try:
        for rec in trace.records:
            y = ctx.to_time(rec.output)
            row = {"run_id": run_id, "cast": rec.cast_index, "model": p["model"]}
            row.update(ctx.metrics(y, rec.result.flagged.sum()))
            rows.append(row)
            if p["save_casts"]:
                atomic_write(out / f"output_cast{rec.cast_index}.wav",
                             lambda f, y=y: write_wav(f, y, fs))
        final = ctx.to_time(trace.final.output)
        atomic_write(out / "output.wav", lambda f: write_wav(f, final, fs))
        write_csv(out / "metrics.csv", ["run_id", "cast", "model"] + METRIC_COLUMNS, rows)
        if p["dump_magnitude"]:
            mag = np.abs(trace.final.output)
            atomic_write(out / "output_magnitude.csv",
                         lambda f: np.savetxt(f, mag, delimiter=",", fmt="%.8e"))
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO)
    last = rows[-1]
    print(f"si_sdr={_fmt(last['si_sdr'])} best_input_si_sdr={_fmt(last['best_input_si_sdr'])}")
    if p["strict"] and trace.final.result.flagged.any():
        print(f"flagged bins: {np.flatnonzero(trace.final.result.flagged).tolist()}",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def parse_grid(text, kind=float):
    """``'1,2,8'`` or ``'1..20'`` (inclusive integer range) into a list."""
    if text is None:
        return None
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            items.extend(range(int(lo), int(hi) + 1))
        else:
            items.append(kind(part))
    return items


def cmd_sweep(args, p):
    ctx = _Context(args.scene, p)
    axes = {}
    for key, kind in (("beta", float), ("alpha", float), ("nu", float),
                      ("iters", int), ("casts", int)):
        raw = p[key]
        grid = parse_grid(raw, kind) if isinstance(raw, str) else [raw]
        if not grid:
            raise CliError(f"empty grid for --{key}")
        axes[key] = [kind(v) for v in grid]
    run_id = _run_id("sweep", p)
    rows = []
    for beta, alpha, nu, iters, casts in itertools.product(*axes.values()):
        cell = dict(p, beta=beta, alpha=alpha, nu=nu)
        model = _model_config(cell)
        trace = _cast_run(ctx, cell, model, iters, casts)
        row = {"run_id": run_id, "model": p["model"], "beta": beta, "alpha": alpha, "nu": nu,
               "iters": iters, "casts": casts, "start": p["start"], "generator": p["generator"]}
        row.update(ctx.metrics(ctx.to_time(trace.final.output), trace.final.result.flagged.sum()))
        rows.append(row)
    header = ["run_id", "model", "beta", "alpha", "nu", "iters", "casts", "start",
              "generator"] + METRIC_COLUMNS
    out = _output_dir(args)
    try:
        write_csv(out / "sweep.csv", header, rows)
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO)
    print(f"{len(rows)} rows -> {out / 'sweep.csv'}")
    return EXIT_OK


def _masks(ctx, p):
    if p["ideal_masks"]:
        if ctx.target is None or ctx.noise is None:
            raise CliError("--ideal-masks needs target_image.wav and noise_image.wav")
        return ideal_binary_masks(stft(ctx.target, ctx.cfg), stft(ctx.noise[ctx.m], ctx.cfg))
    if not (p["target_mask"] and p["interference_mask"]):
        raise CliError("give --target-mask and --interference-mask, or --ideal-masks")
    try:
        mt = read_mask_csv(p["target_mask"])
        mi = read_mask_csv(p["interference_mask"])
    except OSError as exc:
        raise CliError(f"cannot read mask: {exc}", EXIT_IO)
    except ValueError as exc:
        raise CliError(str(exc))
    masks = MaskPair(mt, mi)
    if mt.shape != ctx.scene.spec.shape[1:]:
        raise CliError(f"mask shape {mt.shape} does not match scene {ctx.scene.spec.shape[1:]}")
    return masks


def _verify_unified(ctx, p):
    """Run the whitened and the direct extractor and compare their outputs."""
    model = _model_config(p)
    ref = ctx.generator(p)(np.abs(ctx.scene.spec[ctx.m]))
    start = START_NAMES.get(p["start"], "boost")
    iters = int(p["iters"])
    res = run_sibf(ctx.scene, ref, model, start=start, iters=iters, mic_index=ctx.m)
    direct = run_sibf_direct(ctx.scene, ref, model, start=start, iters=iters)
    yw, yd = res.y1, direct.apply(ctx.scene)
    ok = ~(res.flagged | direct.flagged)
    num = np.linalg.norm(np.abs(yw[ok]) - np.abs(yd[ok]), axis=-1)
    dev = float((num / np.linalg.norm(yw[ok], axis=-1)).max()) if ok.any() else 0.0
    cos = np.abs(np.sum(yw[ok] * yd[ok].conj(), axis=-1)) / (
        np.linalg.norm(yw[ok], axis=-1) * np.linalg.norm(yd[ok], axis=-1))
    print(f"unified check ({p['model']}): bins={int(ok.sum())} "
          f"max_rel_deviation={dev:.3e} min_abs_cosine={cos.min() if ok.any() else 1.0:.12f}")
    return dev


def cmd_maxsnr(args, p):
    ctx = _Context(args.scene, p)
    try:
        masks = _masks(ctx, p)
    except ValueError as exc:
        raise CliError(str(exc))
    bf = max_snr_bf(ctx.scene, masks)
    y = bf.apply(ctx.scene)
    gamma = np.mean(ctx.scene.spec[ctx.m] * y.conj(), axis=-1)
    out_spec = gamma[:, None] * y
    out_t = ctx.to_time(out_spec)
    flagged = bf.flagged_bins()
    row = {"run_id": _run_id("maxsnr", p), "cast": 1, "model": "maxsnr"}
    row.update(ctx.metrics(out_t, flagged.size))
    out = _output_dir(args)
    fs = int(ctx.cfg.sample_rate)
    try:
        atomic_write(out / "output.wav", lambda f: write_wav(f, out_t, fs))
        write_csv(out / "metrics.csv", ["run_id", "cast", "model"] + METRIC_COLUMNS, [row])
        reasons = []
        empty_t = masks.m_target.sum(axis=-1) <= 0
        empty_i = masks.m_interference.sum(axis=-1) <= 0
        for f in flagged:
            why = "empty_target_mask" if empty_t[f] else (
                "empty_interference_mask" if empty_i[f] else "singular_covariance")
            reasons.append({"bin": int(f), "reason": why})
        write_csv(out / "flagged_bins.csv", ["bin", "reason"], reasons)
    except OSError as exc:
        raise CliError(f"cannot write to {out}: {exc}", EXIT_IO)
    print(f"flagged bins: {flagged.size}"
          + (f" ({', '.join(map(str, flagged[:20]))}{' ...' if flagged.size > 20 else ''})"
             if flagged.size else ""))
    print(f"si_sdr={_fmt(row['si_sdr'])} best_input_si_sdr={_fmt(row['best_input_si_sdr'])}")
    code = EXIT_OK
    if p["verify_unified"]:
        dev = _verify_unified(ctx, p)
        if p["strict"] and dev >= 1e-6:
            code = EXIT_NUMERIC
    if p["strict"] and flagged.size:
        code = EXIT_NUMERIC
    return code


# ---------------------------------------------------------------- parser


def _add_model_flags(sp, grid=False):
    kind = str if grid else float
    sp.add_argument("scene", help="scene directory containing mixture.wav")
    sp.add_argument("--model", choices=sorted(MODEL_NAMES), help="source model (default laplace)")
    sp.add_argument("--beta", type=kind, help="reference exponent (default 8)")
    sp.add_argument("--alpha", type=kind, help="reference weight (default 100)")
    sp.add_argument("--nu", type=kind, help="degree of freedom (default 1)")
    sp.add_argument("--eps", type=float, help="clipping threshold (default 1e-7)")
    sp.add_argument("--beta-best", dest="beta_best", type=float, help="boost-start exponent (default 8)")
    sp.add_argument("--iters", type=str if grid else int, help="filter iterations (default 10)")
    sp.add_argument("--casts", type=str if grid else int, help="casting rounds (default 1)")
    sp.add_argument("--start", choices=sorted(START_NAMES), help="first-iteration rule (default boost)")
    sp.add_argument("--generator", choices=GENERATORS, help="reference generator (default wiener)")
    sp.add_argument("--blend-lambda", dest="blend_lambda", type=float, help="blend weight (default 0.5)")
    sp.add_argument("--ref-file", dest="ref_file", help="CSV or WAV for --generator file")
    sp.add_argument("--mic", type=int, help="1-based scaling microphone (default min(5, channels))")
    sp.add_argument("--band-zero", dest="band_zero", metavar="LOW,HIGH",
                    help="zero bins outside LOW..HIGH Hz before synthesis and scoring")
    sp.add_argument("--strict", action="store_true", default=None,
                    help="exit 4 when bins are flagged")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sibf", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="write synthetic scenes")
    sp.add_argument("--mics", type=int)
    sp.add_argument("--sources", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--multiplier", type=float, help="background multiplier (default 1.0)")
    sp.add_argument("--duration", type=float, help="seconds (default 4)")
    sp.add_argument("--sample-rate", dest="sample_rate", type=int)
    sp.add_argument("--mixing", choices=["instantaneous_real", "instantaneous_complex_per_bin"])
    sp.add_argument("--snr", type=float, help="input SNR in dB at multiplier 1 (default 2)")
    sp.add_argument("--suite", action="store_true", default=None,
                    help="write the four multipliers 0.25, 0.5, 1, 2 as subdirectories")

    sp = sub.add_parser("extract", help="run extraction (with optional casting)")
    _add_model_flags(sp)
    sp.add_argument("--save-casts", dest="save_casts", action="store_true", default=None)
    sp.add_argument("--dump-magnitude", dest="dump_magnitude", action="store_true", default=None,
                    help="also write output_magnitude.csv (F rows x T columns)")

    sp = sub.add_parser("sweep", help="grid sweep over beta/alpha/nu/iters/casts",
                        description="Values are comma lists; iters and casts also accept A..B.")
    _add_model_flags(sp, grid=True)

    sp = sub.add_parser("maxsnr", help="mask-based Max SNR beamformer")
    _add_model_flags(sp)
    sp.add_argument("--target-mask", dest="target_mask", help="CSV, F rows x T columns")
    sp.add_argument("--interference-mask", dest="interference_mask", help="CSV, F rows x T columns")
    sp.add_argument("--ideal-masks", dest="ideal_masks", action="store_true", default=None,
                    help="derive complementary binary masks from the scene's ground truth")
    sp.add_argument("--verify-unified", dest="verify_unified", action="store_true", default=None,
                    help="compare whitened and direct extractor outputs")

    for name, p in sub.choices.items():
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./sibf_out)")
    return parser


COMMANDS = {"simulate": cmd_simulate, "extract": cmd_extract, "sweep": cmd_sweep,
            "maxsnr": cmd_maxsnr}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        p = resolve(args)
        return COMMANDS[args.command](args, p)
    except CliError as exc:
        print(f"sibf {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
