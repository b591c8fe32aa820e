"""Command-line front end.

Subcommands wire the library end-to-end: ``degrade`` synthesizes noisy or
decimated inputs, ``denoise``/``deblur``/``upsample`` run the three
restoration tasks, ``residual-hist`` emits the quantile-residual
distribution study, and ``compare`` runs the quantile prior against
TV-only and the RED-style cross term on the same input.

Settings come from a flat ``key = value`` config file overridden by
command-line flags (flags win).  Every key has a documented default;
``--print-config`` prints the effective configuration and exits.  Errors
are reported as one machine-parsable line ``error: <kind>: <detail>`` on
stderr with a nonzero exit code.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .degrade import (
    ConvOperator,
    DecimationSpec,
    NoiseSpec,
    add_mixed_noise,
    add_noise,
    degrade_depth,
    nn_upsample,
)
from .image import GRAYSCALE_WEIGHTS, channel_average
from .io import ImageIOError, read_image, read_kernel, write_image
from .metrics import bme, psnr, residual_histogram, rmse
from .quantile import GUIDANCE_MODES, QuantileConfig
from .solvers import (
    CGBreakdownError,
    IdentityData,
    LinearOpData,
    MaskedData,
    SolverConfig,
    SolverDivergenceError,
    solve_admm,
    solve_gd,
    solve_multichannel,
)


class ConfigError(Exception):
    """Bad key, value, or combination in the run configuration."""


# Every configuration key with its default.  Solver defaults follow the
# published reference parameterization: lambda 13, alpha0 1100, mu 0.05,
# beta 7, p 0.5.
DEFAULTS = {
    "input": "",
    "guidance": "",
    "output": "",
    "reference": "",
    "kernel": "",
    "seed": 0,
    "trace": False,
    "multichannel": False,
    "solver": "admm",
    "lambda": 13.0,
    "mu": 0.05,
    "epsilon": 1e-6,
    "alpha0": 1100.0,
    "beta": 7.0,
    "step_size": 0.1,
    "max_iters": 0,  # 0 selects the per-solver default (100 ADMM / 500 GD)
    "q_refresh_period": 1,
    "cg_iters": 20,
    "cg_tol": 1e-6,
    "penalty_factor": 2.0,
    "penalty_ratio": 10.0,
    "p": 0.5,
    "radius": 2,
    "sigma_w": 0.1,
    "guidance_mode": "dynamic-input",
    "noise_kind": "gaussian",
    "noise_sigma": 0.1,
    "noise_density": 0.05,
    "noise_peak": 255.0,
    "factor": 1,
    "blur_sigma": 0.0,
    "bins": 101,
    "delta": 0.01,
    "red_lambda": 0.25,
    "red_step": 0.05,
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _coerce(key, raw):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for key {key!r}") from None


def parse_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; unknown keys are rejected."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


def load_config(args) -> dict:
    """Defaults, then config file, then command-line flags (flags win)."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in ("input", "guidance", "output", "reference", "kernel"):
        val = getattr(args, key, None)
        if val:
            cfg[key] = val
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.trace:
        cfg["trace"] = True
    if getattr(args, "multichannel", False):
        cfg["multichannel"] = True
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def print_config(cfg) -> None:
    for key in DEFAULTS:
        value = cfg[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        print(f"{key} = {value}")


def _require(cfg, *keys):
    for key in keys:
        if not cfg[key]:
            raise ConfigError(f"missing required setting {key!r}")


def _grayscale(mc) -> np.ndarray:
    if mc.shape[0] == 1:
        return mc[0]
    if mc.shape[0] == 3:
        return channel_average(mc, GRAYSCALE_WEIGHTS)
    return channel_average(mc, np.full(mc.shape[0], 1.0 / mc.shape[0]))


def _load_guidance(cfg):
    if not cfg["guidance"]:
        return None
    return _grayscale(read_image(cfg["guidance"]))


def _quantile_config(cfg, have_guidance) -> QuantileConfig:
    mode = cfg["guidance_mode"]
    if mode not in GUIDANCE_MODES:
        raise ConfigError(f"guidance_mode must be one of {GUIDANCE_MODES}")
    if have_guidance and mode != "uniform":
        mode = "static"
    elif not have_guidance and mode == "static":
        raise ConfigError("guidance_mode=static requires --guidance")
    return QuantileConfig(
        p=cfg["p"], radius=cfg["radius"], sigma_w=cfg["sigma_w"], guidance=mode
    )


def _solver_config(cfg, qcfg, **overrides) -> SolverConfig:
    params = dict(
        lam=cfg["lambda"],
        mu=cfg["mu"],
        epsilon=cfg["epsilon"],
        alpha0=cfg["alpha0"],
        beta=cfg["beta"],
        step_size=cfg["step_size"],
        max_iters=cfg["max_iters"] or None,
        q_refresh_period=cfg["q_refresh_period"],
        cg_iters=cfg["cg_iters"],
        cg_tol=cfg["cg_tol"],
        penalty_factor=cfg["penalty_factor"],
        penalty_ratio=cfg["penalty_ratio"],
        quantile=qcfg,
    )
    params.update(overrides)
    return SolverConfig(**params)


def _channel_weights(channels) -> np.ndarray:
    if channels == 3:
        return np.asarray(GRAYSCALE_WEIGHTS)
    return np.full(channels, 1.0 / channels)


def _write_result(cfg, out) -> None:
    write_image(cfg["output"], np.clip(out, 0.0, 1.0))


def _emit_trace(cfg, trace) -> None:
    if not cfg["trace"]:
        return
    from . import report

    base = Path(cfg["output"])
    trace.write_csv(base.with_name(base.stem + "_trace.csv"))
    report.plot_trace(base.with_name(base.stem + "_trace.png"), trace)


def _solve(cfg, data, guidance):
    qcfg = _quantile_config(cfg, guidance is not None)
    scfg = _solver_config(cfg, qcfg)
    if cfg["multichannel"]:
        if data.channels < 2:
            raise ConfigError("--multichannel requires a multi-channel input")
        return solve_multichannel(data, scfg, _channel_weights(data.channels), guidance)
    if cfg["solver"] == "gd":
        return solve_gd(data, scfg, guidance)
    if cfg["solver"] != "admm":
        raise ConfigError(f"solver must be 'admm' or 'gd', got {cfg['solver']!r}")
    return solve_admm(data, scfg, guidance)


def cmd_denoise(cfg) -> int:
    _require(cfg, "input", "output")
    g = read_image(cfg["input"])
    guidance = _load_guidance(cfg)
    out, trace = _solve(cfg, IdentityData(g), guidance)
    _write_result(cfg, out)
    _emit_trace(cfg, trace)
    return 0


def cmd_deblur(cfg) -> int:
    _require(cfg, "input", "output", "kernel")
    g = read_image(cfg["input"])
    op = ConvOperator(read_kernel(cfg["kernel"]))
    guidance = _load_guidance(cfg)
    out, trace = _solve(cfg, LinearOpData(g, op), guidance)
    _write_result(cfg, out)
    _emit_trace(cfg, trace)
    return 0


def cmd_upsample(cfg) -> int:
    _require(cfg, "input", "output", "guidance")
    low = read_image(cfg["input"])
    if low.shape[0] != 1:
        raise ConfigError("upsample expects a single-channel depth input")
    guidance = _load_guidance(cfg)
    if low[0].shape == guidance.shape:
        up = low[0]
    else:
        up = nn_upsample(low[0], guidance.shape)
    data = MaskedData(up, confidence=np.ones_like(up))
    out, trace = _solve(cfg, data, guidance)
    _write_result(cfg, out)
    _emit_trace(cfg, trace)
    return 0


def cmd_degrade(cfg) -> int:
    _require(cfg, "input", "output")
    g = read_image(cfg["input"])
    seed = cfg["seed"]
    if cfg["factor"] >= 2:
        spec = DecimationSpec(factor=cfg["factor"], blur_sigma=cfg["blur_sigma"])
        if g.shape[0] == 1:
            ch_seeds = [seed]
        else:
            # channel-independent noise streams derived from the one seed
            ch_seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(g.shape[0])]
        lows, ups = [], []
        for c in range(g.shape[0]):
            low, up = degrade_depth(g[c], spec, _noise_spec(cfg, ch_seeds[c]))
            lows.append(low)
            ups.append(up)
        out_path = Path(cfg["output"])
        write_image(cfg["output"], np.clip(np.stack(ups), 0.0, 1.0))
        low_path = out_path.with_name(out_path.stem + "_low" + out_path.suffix)
        write_image(low_path, np.clip(np.stack(lows), 0.0, 1.0))
        return 0
    if cfg["noise_kind"] == "mixed":
        noisy = add_mixed_noise(g, seed)
    else:
        noisy = add_noise(g, _noise_spec(cfg, seed))
    write_image(cfg["output"], noisy)
    return 0


def _noise_spec(cfg, seed) -> NoiseSpec:
    kind = cfg["noise_kind"]
    if kind == "mixed":
        raise ConfigError("mixed noise is only available without decimation")
    return NoiseSpec(
        kind=kind,
        sigma=cfg["noise_sigma"],
        density=cfg["noise_density"],
        peak=cfg["noise_peak"],
        seed=seed,
    )


def cmd_residual_hist(cfg) -> int:
    _require(cfg, "input", "output")
    from . import report

    img = _grayscale(read_image(cfg["input"]))
    guidance = _load_guidance(cfg)
    qcfg = _quantile_config(cfg, guidance is not None)
    hist = residual_histogram(img, qcfg, cfg["bins"], guidance)
    report.write_histogram_csv(cfg["output"], hist)
    fig_path = Path(cfg["output"]).with_suffix(".png")
    report.plot_histogram(fig_path, hist)
    return 0


def cmd_compare(cfg) -> int:
    """Run the quantile prior, TV-only, and the RED-style cross term on one
    input; emit per-method restorations and a metrics CSV plus figure."""
    _require(cfg, "input", "output", "reference")
    from . import report

    g = read_image(cfg["input"])
    reference = _grayscale(read_image(cfg["reference"]))
    guidance = _load_guidance(cfg)
    qcfg = _quantile_config(cfg, guidance is not None)
    outdir = Path(cfg["output"])
    outdir.mkdir(parents=True, exist_ok=True)

    runs = {
        "aquasi": lambda: _solve_compare(cfg, g, guidance, qcfg, "aquasi"),
        "tv": lambda: _solve_compare(cfg, g, guidance, qcfg, "tv"),
        "red": lambda: _solve_compare(cfg, g, guidance, qcfg, "red"),
    }
    rows = []
    for method, run in runs.items():
        out, trace = run()
        out = np.clip(out, 0.0, 1.0)
        write_image(outdir / f"{method}.f32", out)
        if cfg["trace"]:
            trace.write_csv(outdir / f"{method}_trace.csv")
            report.plot_trace(outdir / f"{method}_trace.png", trace, title=method)
        luma = _grayscale(out)
        rows.append(
            (method, psnr(luma, reference), rmse(luma, reference), bme(luma, reference, cfg["delta"]))
        )
    report.write_metrics_csv(outdir / "metrics.csv", rows)
    report.plot_metrics(outdir / "metrics.png", rows)
    return 0


def _solve_compare(cfg, g, guidance, qcfg, method):
    data = IdentityData(g)
    if method == "aquasi":
        scfg = _solver_config(cfg, qcfg, mu=0.0)
        if cfg["multichannel"] and data.channels >= 2:
            return solve_multichannel(data, scfg, _channel_weights(data.channels), guidance)
        return solve_admm(data, scfg, guidance)
    if method == "tv":
        scfg = _solver_config(cfg, qcfg, lam=0.0)
        return solve_admm(data, scfg, guidance)
    scfg = _solver_config(
        cfg, qcfg, lam=cfg["red_lambda"], mu=0.0, step_size=cfg["red_step"]
    )
    return solve_gd(data, scfg, guidance, regularizer="red")


COMMANDS = {
    "denoise": cmd_denoise,
    "deblur": cmd_deblur,
    "upsample": cmd_upsample,
    "degrade": cmd_degrade,
    "residual-hist": cmd_residual_hist,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquasi",
        description="Inverse imaging with the adaptive quantile sparse image prior.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--input", help="input image (PGM/PPM/F32)")
        p.add_argument("--guidance", help="guidance image for static weighting")
        p.add_argument("--output", help="output path (file or directory)")
        p.add_argument("--reference", help="ground-truth image for metrics")
        p.add_argument("--kernel", help="blur kernel file (K format)")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--trace", action="store_true", help="write energy trace CSV + figure")
        p.add_argument("--multichannel", action="store_true",
                       help="couple channels through one shared selection operator")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration and exit")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.print_config:
            print_config(cfg)
            return 0
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
    except ImageIOError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    except SolverDivergenceError as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
    except CGBreakdownError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: value: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
