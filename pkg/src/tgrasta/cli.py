"""Command-line front end.

Subcommands: ``synth``, ``align-batch``, ``align-online``, ``train``,
``align-trained`` and ``eval``. Parameters come from built-in defaults, then
an optional ``key = value`` config file, then command-line flags. Exit codes:
0 success, 1 invalid input or configuration, 2 runtime failure (details in
``errors.csv`` in the output directory).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, kernels
from .admm import AdmmOptions
from .align import (BatchConfig, OnlineState, TrainedModel, align_batch, align_online, align_trained,
                    init_online)
from .errors import ConfigError, TGrastaError
from .grassmann import StepSizeRule
from .imaging import CanonicalFrame, Group, Image, TransformParams, warp
from .synth import (JitterSpec, SceneSpec, corner_error, default_trace_points, jitter, make_scene,
                    pixel_trace_stats)

log = logging.getLogger("tgrasta")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none", "auto") else int(text)


# key: (type, default, help)
KEYS = {
    "in_dir": (str, None, "input directory of .pgm frames"),
    "out_dir": (str, None, "output directory"),
    "config": (str, None, "key = value config file"),
    "frame_w": (_opt_int, None, "canonical frame width (default: input width minus 1/8 margin per side)"),
    "frame_h": (_opt_int, None, "canonical frame height"),
    "group": (str, "euclidean", "transform group: translation, euclidean or affine"),
    "rank": (int, 5, "subspace dimension d"),
    "levels": (int, 3, "number of online levels L"),
    "max_outer": (int, 15, "outer iterations K"),
    "inner_passes": (int, 3, "incremental passes per outer iteration"),
    "step_rule": (str, "diminishing", "constant or diminishing"),
    "eta0": (float, 0.003, "initial geodesic step size"),
    "decay": (float, 0.02, "decay of the diminishing step rule"),
    "rho": (float, 2.0, "ADMM penalty growth factor"),
    "eps_tol": (float, 1e-7, "ADMM residual tolerance"),
    "admm_iters": (int, 50, "ADMM iteration cap"),
    "conv_eps": (float, 1e-3, "relative transform-increment tolerance"),
    "recenter": (_bool, True, "remove the mean increment each outer iteration (batch)"),
    "seed": (int, 0, "random seed"),
    "boundary": (str, "clamp", "clamp or strict"),
    "truth": (str, None, "ground-truth transforms CSV (metrics are written when given)"),
    "est": (str, None, "estimated transforms CSV (eval)"),
    "subspace": (str, None, "subspace file"),
    "train_frames": (int, 10, "frames used to train (0 = all)"),
    "max_iters": (int, 20, "trained-mode iteration cap"),
    "width": (int, 64, "synthetic frame width"),
    "height": (int, 64, "synthetic frame height"),
    "scene_rank": (int, 3, "rank of the synthetic background"),
    "n_frames": (int, 30, "number of synthetic frames"),
    "sparsity": (float, 0.05, "foreground fraction"),
    "fg_magnitude": (float, 1.0, "foreground intensity"),
    "gain_lo": (float, 1.0, "lower illumination gain"),
    "gain_hi": (float, 1.0, "upper illumination gain"),
    "x0": (float, 6.0, "full x translation range (px)"),
    "y0": (float, 6.0, "full y translation range (px)"),
    "theta0": (float, 6.0, "full rotation range (degrees)"),
    "jitter_seed": (_opt_int, None, "jitter seed (default: seed + 1)"),
}

_ALIGN = ["in_dir", "out_dir", "config", "frame_w", "frame_h", "group", "rank", "max_outer", "inner_passes",
          "step_rule", "eta0", "decay", "rho", "eps_tol", "admm_iters", "conv_eps", "seed", "boundary", "truth"]
COMMANDS = {
    "synth": ["out_dir", "config", "frame_w", "frame_h", "width", "height", "scene_rank", "n_frames",
              "sparsity", "fg_magnitude", "gain_lo", "gain_hi", "x0", "y0", "theta0", "seed", "jitter_seed"],
    "align-batch": _ALIGN + ["recenter"],
    "train": _ALIGN + ["recenter", "train_frames"],
    "align-online": _ALIGN + ["recenter", "levels", "subspace", "train_frames"],
    "align-trained": ["in_dir", "out_dir", "config", "subspace", "frame_w", "frame_h", "group", "max_iters",
                      "rho", "eps_tol", "admm_iters", "conv_eps", "boundary", "truth"],
    "eval": ["out_dir", "config", "est", "truth", "frame_w", "frame_h"],
}
_FLAG_ALIASES = {"in_dir": "--in", "out_dir": "--out"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgrasta", description="Robust image alignment with a Grassmannian subspace.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, keys in COMMANDS.items():
        p = sub.add_parser(name)
        for key in keys:
            flag = _FLAG_ALIASES.get(key, "--" + key.replace("_", "-"))
            p.add_argument(flag, dest=key, default=None, metavar=key.upper(), help=KEYS[key][2])
    return parser


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys are accepted."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_config(command: str, flags: dict) -> dict:
    """Merge defaults, config file and flags; convert and validate every value."""
    allowed = COMMANDS[command]
    raw = {}
    if flags.get("config"):
        for key, value in read_config_file(flags["config"]).items():
            if key not in allowed or key == "config":
                raise ConfigError(f"unknown key {key!r} for command {command}")
            raw[key] = value
    raw.update({k: v for k, v in flags.items() if v is not None and k in allowed})
    cfg = {}
    for key in allowed:
        typ, default, _ = KEYS[key]
        if key in raw:
            try:
                cfg[key] = typ(raw[key])
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from None
        else:
            cfg[key] = default
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if "group" in cfg:
        try:
            cfg["group"] = Group.parse(cfg["group"]).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.get("boundary") not in (None, "clamp", "strict"):
        raise ConfigError("boundary must be clamp or strict")
    if cfg.get("step_rule") not in (None, "constant", "diminishing"):
        raise ConfigError("step_rule must be constant or diminishing")
    for key in ("rank", "levels", "max_outer", "inner_passes", "admm_iters", "max_iters", "n_frames",
                "scene_rank"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"{key} must be at least 1")
    for key in ("eta0", "decay", "eps_tol", "conv_eps"):
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if "rho" in cfg and not cfg["rho"] > 1:
        raise ConfigError("rho must exceed 1")
    if cfg.get("train_frames", 0) < 0:
        raise ConfigError("train_frames must be nonnegative")
    for key in ("x0", "y0", "theta0"):
        if key in cfg and cfg[key] < 0:
            raise ConfigError(f"{key} must be nonnegative")
    for key in ("frame_w", "frame_h"):
        if cfg.get(key) is not None and cfg[key] < 2:
            raise ConfigError(f"{key} must be at least 2")


def _require(cfg, *keys):
    for key in keys:
        if not cfg.get(key):
            raise ConfigError(f"--{key.replace('_', '-')} is required".replace("--in-dir", "--in")
                              .replace("--out-dir", "--out"))


def default_frame_size(width: int, height: int):
    """Canonical frame that leaves a margin of width/8 (height/8) on each side."""
    mx = max(1, round(width / 8))
    my = max(1, round(height / 8))
    return max(2, width - 2 * mx), max(2, height - 2 * my)


def _frame(cfg, shape) -> CanonicalFrame:
    h, w = shape
    dw, dh = default_frame_size(w, h)
    return CanonicalFrame(cfg["frame_w"] or dw, cfg["frame_h"] or dh)


def _load_frames(cfg):
    paths = io.list_frames(cfg["in_dir"])
    images = [io.read_pgm(p) for p in paths]
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ConfigError(f"input frames differ in size: {sorted(shapes)}")
    return paths, images


def _batch_config(cfg) -> BatchConfig:
    try:
        return BatchConfig(
            d=cfg["rank"],
            max_outer=cfg["max_outer"],
            inner_passes=cfg["inner_passes"],
            conv_eps=cfg["conv_eps"],
            step_rule=StepSizeRule(cfg["step_rule"], cfg["eta0"], cfg["decay"]),
            admm=_admm_options(cfg),
            seed=cfg["seed"],
            boundary=cfg["boundary"],
            recenter=cfg.get("recenter", True),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _admm_options(cfg) -> AdmmOptions:
    return AdmmOptions(rho=cfg["rho"], eps_tol=cfg["eps_tol"], max_iters=cfg["admm_iters"])


def _out_dir(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _to_image(values, shape) -> Image:
    return Image(np.clip(values, 0.0, 1.0).reshape(shape))


def _write_components(out, names, images, taus, lowrank, outliers, frame):
    """Aligned, low-rank and |outlier| images, rescaled to the intensity of the aligned warp."""
    written = []
    dirs = {k: out / k for k in ("aligned", "lowrank", "outliers")}
    for d in dirs.values():
        d.mkdir(exist_ok=True)
    shape = (frame.height, frame.width)
    for i, name in enumerate(names):
        raw = warp(images[i], taus[i], frame).values
        scale = float(np.linalg.norm(raw))
        parts = {
            "aligned": raw,
            "lowrank": lowrank[i] * scale,
            "outliers": np.abs(outliers[i]) * scale,
        }
        for key, values in parts.items():
            path = dirs[key] / f"{name}.pgm"
            io.write_pgm(_to_image(values, shape), path)
            written.append(path)
    return written


def _metrics_rows(tau_est, tau_true, frame):
    err = corner_error(tau_est, tau_true, frame)
    stats = pixel_trace_stats(tau_est, tau_true, default_trace_points(frame))
    rows = [
        ("n_frames", len(err)),
        ("mean_corner_error", float(err.mean())),
        ("max_corner_error", float(err.max())),
        ("trace_max_error", stats.max_error),
        ("trace_mean_error", stats.mean_error),
    ]
    labels = ["x1", "y1", "x2", "y2"]
    rows += [(f"trace_std_{lab}", float(s)) for lab, s in zip(labels, stats.std)]
    return err, rows


def _write_metrics(out, names, tau_est, truth_path, frame):
    """Per-frame corner errors and summary statistics against a ground-truth CSV."""
    true_names, tau_true = io.read_transforms(truth_path)
    lookup = dict(zip(true_names, tau_true))
    missing = [n for n in names if n not in lookup]
    if missing:
        raise ConfigError(f"ground truth lacks frames: {missing[:5]}")
    truth = [lookup[n] for n in names]
    truth = [t if t.group is e.group else _lift(t, e.group) for t, e in zip(truth, tau_est)]
    err, rows = _metrics_rows(tau_est, truth, frame)
    per_frame = out / "corner_errors.csv"
    io.write_csv(per_frame, ["frame", "corner_error"], zip(names, err))
    summary = out / "metrics.csv"
    io.write_csv(summary, ["metric", "value"], rows)
    return [per_frame, summary]


def _lift(tau: TransformParams, group: Group) -> TransformParams:
    """Express ``tau`` in a larger group (translation -> euclidean -> affine)."""
    A = tau.linear_part()
    t = tau.translation()
    if group is Group.AFFINE:
        return TransformParams(group, [A[0, 0], A[0, 1], A[1, 0], A[1, 1], t[0], t[1]])
    if group is Group.EUCLIDEAN and tau.group is Group.TRANSLATION:
        return TransformParams(group, [0.0, t[0], t[1]])
    raise ConfigError(f"cannot compare {tau.group.value} ground truth with {group.value} estimates")


def _write_failures(out, failures, names):
    path = out / "errors.csv"
    io.write_csv(path, ["frame", "error"], [(names[i], msg) for i, msg in sorted(failures.items())])
    return path


def _finish(out, command, cfg, inputs, outputs, failures=None, names=None, extra=None):
    if failures:
        outputs.append(_write_failures(out, failures, names))
    extra = dict(extra or {})
    extra["software"] = {"tgrasta": __version__, "numpy": np.__version__, "kernel_backend": kernels.BACKEND}
    io.write_manifest(out / "manifest.json", command, cfg, inputs, outputs, extra)
    if failures:
        log.error("%d frame(s) failed; see %s", len(failures), out / "errors.csv")
        return EXIT_RUNTIME
    return EXIT_OK


def _initial_taus(n, group):
    return [TransformParams.identity(group)] * n


# ---------------------------------------------------------------- commands

def cmd_synth(cfg) -> int:
    _require(cfg, "out_dir")
    out = _out_dir(cfg)
    try:
        spec = SceneSpec(width=cfg["width"], height=cfg["height"], rank=cfg["scene_rank"],
                         n_frames=cfg["n_frames"], foreground_sparsity=cfg["sparsity"],
                         foreground_magnitude=cfg["fg_magnitude"],
                         illumination_range=(cfg["gain_lo"], cfg["gain_hi"]), seed=cfg["seed"])
        jseed = cfg["jitter_seed"] if cfg["jitter_seed"] is not None else cfg["seed"] + 1
        jspec = JitterSpec(cfg["x0"], cfg["y0"], cfg["theta0"], seed=jseed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scene = make_scene(spec)
    perturbed, taus = jitter(scene.frames, jspec)
    frames_dir = out / "frames"
    clean_dir = out / "clean"
    frames_dir.mkdir(exist_ok=True)
    clean_dir.mkdir(exist_ok=True)
    width = len(str(max(spec.n_frames - 1, 0)))
    names = [f"frame_{i:0{max(4, width)}d}" for i in range(spec.n_frames)]
    outputs = []
    for name, img, clean in zip(names, perturbed, scene.frames):
        for d, im in ((frames_dir, img), (clean_dir, clean)):
            path = d / f"{name}.pgm"
            io.write_pgm(im, path)
            outputs.append(path)
    gt = out / "ground_truth.csv"
    io.write_transforms(gt, names, taus)
    outputs.append(gt)
    cfg = dict(cfg, jitter_seed=jseed)
    return _finish(out, "synth", cfg, [], outputs,
                   extra={"seeds": {"scene": spec.seed, "jitter": jseed}})


def cmd_align_batch(cfg, command="align-batch") -> int:
    _require(cfg, "in_dir", "out_dir")
    paths, images = _load_frames(cfg)
    if command == "train" and cfg["train_frames"]:
        paths, images = paths[:cfg["train_frames"]], images[:cfg["train_frames"]]
    out = _out_dir(cfg)
    frame = _frame(cfg, images[0].shape)
    bcfg = _batch_config(cfg)
    names = [p.stem for p in paths]
    group = Group.parse(cfg["group"])
    result = align_batch(images, _initial_taus(len(images), group), frame, bcfg)

    outputs = []
    tf = out / "transforms.csv"
    extra = [(i not in result.failures, result.residuals[i]) for i in range(len(images))]
    io.write_transforms(tf, names, result.taus, ("ok", "residual"), extra)
    trace = out / "trace.csv"
    io.write_csv(trace, ["outer", "mean_delta_norm"], enumerate(result.trace, start=1))
    outputs += [tf, trace]
    outputs += _write_components(out, names, images, result.taus, result.lowrank, result.outliers, frame)
    if command == "train":
        sub = out / "subspace.txt"
        meta = {"frame_w": frame.width, "frame_h": frame.height, "group": group.value,
                "step_counter": result.step_rule.t}
        io.write_subspace(result.subspace, sub, meta)
        outputs.append(sub)
    if cfg.get("truth"):
        outputs += _write_metrics(out, names, result.taus, cfg["truth"], frame)
    inputs = list(paths) + ([cfg["truth"]] if cfg.get("truth") else [])
    return _finish(out, command, cfg, inputs, outputs, result.failures, names,
                   extra={"seeds": {"batch": cfg["seed"]}, "outer_iterations": result.outer_iterations,
                          "converged": result.converged, "frame": [frame.width, frame.height]})


def cmd_train(cfg) -> int:
    return cmd_align_batch(cfg, "train")


def cmd_align_online(cfg) -> int:
    _require(cfg, "in_dir", "out_dir")
    paths, images = _load_frames(cfg)
    out = _out_dir(cfg)
    group = Group.parse(cfg["group"])
    bcfg = _batch_config(cfg)
    names = [p.stem for p in paths]
    inputs = list(paths)
    if cfg.get("subspace"):
        U, meta = io.read_subspace(cfg["subspace"])
        frame = _model_frame(cfg, meta, images[0].shape)
        if U.n != frame.n:
            raise ConfigError(f"subspace has n={U.n}, frame has {frame.n} pixels")
        rule = StepSizeRule(cfg["step_rule"], cfg["eta0"], cfg["decay"], t=int(meta.get("step_counter", 0)))
        state = OnlineState([U.copy() for _ in range(cfg["levels"])], [StepSizeRule(**vars(rule))
                                                                      for _ in range(cfg["levels"])])
        inputs.append(cfg["subspace"])
    else:
        frame = _frame(cfg, images[0].shape)
        k = cfg["train_frames"] or len(images)
        state, _ = init_online(images[:k], _initial_taus(min(k, len(images)), group), frame, bcfg,
                               cfg["levels"])
    state, result = align_online(state, images, _initial_taus(len(images), group), frame, bcfg)

    outputs = []
    tf = out / "transforms.csv"
    extra = [(i not in result.failures, result.residuals[i]) for i in range(len(images))]
    io.write_transforms(tf, names, result.taus, ("ok", "residual"), extra)
    outputs.append(tf)
    outputs += _write_components(out, names, images, result.taus, result.lowrank, result.outliers, frame)
    for ell, U in enumerate(state.subspaces, start=1):
        path = out / f"subspace_level{ell}.txt"
        io.write_subspace(U, path, {"frame_w": frame.width, "frame_h": frame.height, "group": group.value,
                                    "step_counter": state.step_rules[ell - 1].t})
        outputs.append(path)
    if cfg.get("truth"):
        outputs += _write_metrics(out, names, result.taus, cfg["truth"], frame)
        inputs.append(cfg["truth"])
    return _finish(out, "align-online", cfg, inputs, outputs, result.failures, names,
                   extra={"seeds": {"batch": cfg["seed"]}, "frame": [frame.width, frame.height]})


def _model_frame(cfg, meta, shape) -> CanonicalFrame:
    if cfg.get("frame_w") or cfg.get("frame_h") or "frame_w" not in meta:
        return _frame(cfg, shape)
    return CanonicalFrame(int(meta["frame_w"]), int(meta["frame_h"]))


def cmd_align_trained(cfg) -> int:
    _require(cfg, "in_dir", "out_dir", "subspace")
    paths, images = _load_frames(cfg)
    out = _out_dir(cfg)
    U, meta = io.read_subspace(cfg["subspace"])
    frame = _model_frame(cfg, meta, images[0].shape)
    group = Group.parse(meta.get("group", cfg["group"]))
    try:
        model = TrainedModel(U, frame, group)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    names = [p.stem for p in paths]
    opts = _admm_options(cfg)
    taus, rows, failures = [], [], {}
    outl, low = [], []
    for i, img in enumerate(images):
        tau0 = TransformParams.identity(group)
        try:
            tau, e, conv = align_trained(model, img, tau0, max_iters=cfg["max_iters"], conv_eps=cfg["conv_eps"],
                                         admm_opts=opts, boundary=cfg["boundary"])
        except TGrastaError as exc:
            failures[i] = str(exc)
            tau, e, conv = tau0, np.zeros(frame.n), False
        v = warp(img, tau, frame).values
        nrm = float(np.linalg.norm(v)) or 1.0
        w = U.basis.T @ (v / nrm - e)
        taus.append(tau)
        outl.append(e)
        low.append(U.basis @ w)
        rows.append((conv, float(np.abs(e).sum())))

    outputs = []
    tf = out / "transforms.csv"
    io.write_transforms(tf, names, taus, ("converged", "l1_outlier"), rows)
    outputs.append(tf)
    outputs += _write_components(out, names, images, taus, low, outl, frame)
    inputs = list(paths) + [cfg["subspace"]]
    if cfg.get("truth"):
        outputs += _write_metrics(out, names, taus, cfg["truth"], frame)
        inputs.append(cfg["truth"])
    return _finish(out, "align-trained", cfg, inputs, outputs, failures, names,
                   extra={"frame": [frame.width, frame.height]})


def cmd_eval(cfg) -> int:
    _require(cfg, "out_dir", "est", "truth", "frame_w", "frame_h")
    out = _out_dir(cfg)
    frame = CanonicalFrame(cfg["frame_w"], cfg["frame_h"])
    names, tau_est = io.read_transforms(cfg["est"])
    outputs = _write_metrics(out, names, tau_est, cfg["truth"], frame)
    return _finish(out, "eval", cfg, [cfg["est"], cfg["truth"]], outputs)


HANDLERS = {
    "synth": cmd_synth,
    "align-batch": cmd_align_batch,
    "train": cmd_train,
    "align-online": cmd_align_online,
    "align-trained": cmd_align_trained,
    "eval": cmd_eval,
}


def run(command: str, cfg: dict) -> int:
    return HANDLERS[command](cfg)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
        cfg = resolve_config(args.command, flags)
        return run(args.command, cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TGrastaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc, ValueError) else EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
